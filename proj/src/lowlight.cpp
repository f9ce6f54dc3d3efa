// SPDX-License-Identifier: Apache-2.0
#include "effdet/lowlight.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "effdet/errors.hpp"

namespace effdet {

namespace fs = std::filesystem;

std::string to_string(EnhanceStrategy strategy) {
  switch (strategy) {
    case EnhanceStrategy::none: return "none";
    case EnhanceStrategy::constant_c: return "const";
    case EnhanceStrategy::external: return "external";
  }
  return "none";
}

EnhanceStrategy parse_strategy(const std::string& text) {
  if (text == "none") return EnhanceStrategy::none;
  if (text == "const" || text == "constant_c") return EnhanceStrategy::constant_c;
  if (text == "external") return EnhanceStrategy::external;
  throw ConfigurationError("unknown enhancement strategy '" + text + "' (none|const|external)");
}

void EnhancementSpec::validate() const {
  if (darken_offset < 0 || darken_offset > 255) throw DomainError("darken offset must be in [0,255]");
  if (c < 0 || c > 255) throw DomainError("c must be in [0,255]");
  if (strategy == EnhanceStrategy::external && external_command.empty())
    throw ConfigurationError("external enhancement needs a command");
}

std::string EnhancementSpec::label() const {
  switch (strategy) {
    case EnhanceStrategy::none: return "none";
    case EnhanceStrategy::constant_c: return "c=" + std::to_string(c);
    case EnhanceStrategy::external: return "external";
  }
  return "none";
}

PixelImage darken(const PixelImage& image, int offset) {
  if (offset < 0 || offset > 255) throw DomainError("darken offset must be in [0,255], got " + std::to_string(offset));
  PixelImage out = image;
  for (auto& v : out.values) v = static_cast<std::uint8_t>(std::max(static_cast<int>(v) - offset, 0));
  return out;
}

PixelImage brighten_constant(const PixelImage& image, int c) {
  if (c < 0 || c > 255) throw DomainError("c must be in [0,255], got " + std::to_string(c));
  PixelImage out = image;
  for (auto& v : out.values) v = static_cast<std::uint8_t>(std::min(static_cast<int>(v) + c, 255));
  return out;
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'')
      out += "'\\''";
    else
      out += ch;
  }
  return out + "'";
}

// Unique per process and call, so concurrent enhancements never share files.
fs::path unique_temp_dir() {
  static std::atomic<unsigned long> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  auto dir = fs::temp_directory_path() /
             ("effdet-enhance-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + std::to_string(stamp));
  fs::create_directories(dir);
  return dir;
}

struct TempDir {
  fs::path path;
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

struct PipeCloser {
  void operator()(std::FILE* f) const {
    if (f) pclose(f);
  }
};

EnhanceResult run_external(const PixelImage& image, const std::string& command) {
  const auto start = std::chrono::steady_clock::now();
  TempDir dir{unique_temp_dir()};
  const auto input = dir.path / "input.png";
  const auto output = dir.path / "output.png";
  write_image(input, image);
  const std::string full = command + " " + shell_quote(input.string()) + " " + shell_quote(output.string()) + " 2>&1";
  std::string diagnostics;
  int status = -1;
  {
    std::unique_ptr<std::FILE, PipeCloser> pipe(popen(full.c_str(), "r"));
    if (!pipe) throw EnhancementError("cannot launch enhancer: " + command);
    std::array<char, 512> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe.get())) diagnostics += buf.data();
    status = pclose(pipe.release());
  }
  if (status != 0) {
    const auto how = WIFEXITED(status) ? "exited with status " + std::to_string(WEXITSTATUS(status))
                                       : "failed (wait status " + std::to_string(status) + ")";
    throw EnhancementError("enhancer '" + command + "' " + how + (diagnostics.empty() ? "" : ": " + diagnostics));
  }
  if (!fs::exists(output))
    throw EnhancementError("enhancer '" + command + "' wrote no output file" + (diagnostics.empty() ? "" : ": " + diagnostics));
  EnhanceResult result;
  try {
    result.image = read_image(output);
  } catch (const std::exception& e) {
    throw EnhancementError("enhancer output unreadable: " + std::string(e.what()));
  }
  if (result.image.width != image.width || result.image.height != image.height)
    throw EnhancementError("enhancer changed image dimensions");
  result.latency_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.includes_io = true;
  return result;
}

}  // namespace

EnhanceResult enhance(const PixelImage& image, const EnhancementSpec& spec) {
  spec.validate();
  switch (spec.strategy) {
    case EnhanceStrategy::none:
      return {image, 0.0, false};
    case EnhanceStrategy::constant_c: {
      const auto start = std::chrono::steady_clock::now();
      auto out = brighten_constant(image, spec.c);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      return {std::move(out), seconds, false};
    }
    case EnhanceStrategy::external:
      return run_external(image, spec.external_command);
  }
  return {image, 0.0, false};
}

}  // namespace effdet
