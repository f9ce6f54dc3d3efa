// SPDX-License-Identifier: Apache-2.0
#include "effdet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "effdet/errors.hpp"

namespace effdet {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'E', 'F', 'F', 'D', 'E', 'T', 'C', 'K'};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}

  std::uint32_t u32() {
    std::uint32_t v = 0;
    read(&v, sizeof v);
    return v;
  }

  std::string str() {
    const auto n = u32();
    if (n > (1U << 24)) fail("string length out of range");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) fail("truncated file");
  }

  [[noreturn]] void fail(const std::string& what) const { throw InputError("checkpoint " + file_ + ": " + what); }

 private:
  std::istream& in_;
  std::string file_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const Detector<float>& detector, const ClassMap& classes) {
  if (classes.size() != detector.num_classes())
    throw ConfigurationError("class map size does not match the detector's class count");
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + file.string());
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_str(out, detector.config().to_record());
  put_u32(out, static_cast<std::uint32_t>(classes.size()));
  for (const auto& name : classes.names()) put_str(out, name);
  const auto& params = detector.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = params[static_cast<int>(i)];
    put_str(out, params.name(static_cast<int>(i)));
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing checkpoint " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + file.string());
  Reader r(in, file.string());
  char magic[sizeof kMagic];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) r.fail("not a detector checkpoint");
  const auto version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  ArchitectureConfig config;
  try {
    config = ArchitectureConfig::from_record(r.str());
  } catch (const std::exception& e) {
    r.fail(std::string("bad config record: ") + e.what());
  }
  const auto n_classes = r.u32();
  if (n_classes == 0 || n_classes > 4096) r.fail("bad class count");
  std::vector<std::string> names;
  for (std::uint32_t i = 0; i < n_classes; ++i) names.push_back(r.str());
  Checkpoint ckpt{Detector<float>::build(config, static_cast<int>(n_classes)), ClassMap(std::move(names))};
  auto& params = ckpt.detector.parameters();
  const auto n_tensors = r.u32();
  if (n_tensors != params.size())
    r.fail("holds " + std::to_string(n_tensors) + " tensors, config implies " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = params[static_cast<int>(i)];
    const auto name = r.str();
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (name != params.name(static_cast<int>(i)) || rows != m.rows() || cols != m.cols())
      r.fail("tensor '" + name + "' does not match expected '" + params.name(static_cast<int>(i)) + "' " +
             std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    r.read(m.data(), static_cast<std::size_t>(m.size()) * sizeof(float));
  }
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes");
  return ckpt;
}

}  // namespace effdet
