#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "effdet/checkpoint.hpp"
#include "effdet/cli.hpp"
#include "effdet/runconfig.hpp"
#include "json.hpp"

using namespace effdet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kGolden = fs::path(EFFDET_SOURCE_DIR) / "tests" / "golden";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json last_json_line(const std::string& text) {
  auto end = text.find_last_not_of('\n');
  auto start = text.rfind('\n', end);
  return json::parse(text.substr(start == std::string::npos ? 0 : start + 1, end + 1));
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() / ("effdet_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(root);
    setenv(kOutputRootEnv, (root / "runs").c_str(), 1);
  }
  ~Workspace() {
    unsetenv(kOutputRootEnv);
    fs::remove_all(root);
  }
  fs::path operator/(const std::string& name) const { return root / name; }
};

std::vector<std::string> report_metrics(const std::string& csv) {
  // architecture, enhancement, ap, ap50, ap75
  std::vector<std::string> rows;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    std::string cut;
    int commas = 0;
    for (char c : line) {
      if (c == ',' && ++commas == 5) break;
      cut += c;
    }
    rows.push_back(cut);
  }
  return rows;
}

const std::vector<std::string> kTiny = {"--set", "synth_images=16", "--set", "classes=synth_2", "--seed", "5"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

}  // namespace

TEST_CASE("help text matches the golden files") {
  CHECK(cli({"--help"}).out == slurp(kGolden / "help.txt"));
  for (const std::string c : {"scale", "train", "infer", "enhance", "eval", "bench", "study"}) {
    const auto r = cli({c, "--help"});
    CHECK(r.code == 0);
    CHECK_MESSAGE(r.out == slurp(kGolden / ("help_" + c + ".txt")), c);
  }
  const auto help = cli({"--help"}).out;
  for (const auto& k : RunConfig::keys()) CHECK_MESSAGE(help.find("  " + k.key + " ") != std::string::npos, k.key);
}

TEST_CASE("scale table and records") {
  for (const std::string split : {"1-5", "5-1", "3-3"}) {
    const auto r = cli({"scale", "--table", "--split", split});
    CHECK(r.code == 0);
    CHECK(r.out == slurp(kGolden / ("scale_table_" + split + ".tsv")));
  }
  auto r = cli({"scale", "--phi", "3", "--split", "1-5"});
  CHECK(r.out == "architecture=D3(1-5)\ninput_resolution=896\nbackbone_tier=3\nfused_channels=160\nbifpn_depth=4\n"
                 "head_depth=6\n");
  r = cli({"scale", "--phi", "0", "--split", "3-3"});
  CHECK(r.out.find("input_resolution=512\nbackbone_tier=0\nfused_channels=64\nbifpn_depth=3\nhead_depth=3\n") !=
        std::string::npos);
}

TEST_CASE("usage errors exit 2 with JSON on stderr") {
  for (const auto& args : std::vector<std::vector<std::string>>{{"scale", "--phi", "-1", "--split", "1-5"},
                                                                 {"scale", "--phi", "0", "--split", "1_5"},
                                                                 {"scale", "--phi", "x"},
                                                                 {},
                                                                 {"frobnicate"},
                                                                 {"train", "--set", "nonsense=1"},
                                                                 {"train", "--set", "epochs=many"},
                                                                 {"train", "--set", "tau=2"}}) {
    const auto r = cli(args);
    CHECK(r.code == kExitUsage);
    const auto e = last_json_line(r.err);
    CHECK(e["error"]["exit_code"] == 2);
    CHECK(e["error"]["kind"] == "usage");
    CHECK_FALSE(e["error"]["message"].get<std::string>().empty());
  }
}

TEST_CASE("config file parsing") {
  Workspace ws;
  std::ofstream(ws / "run.cfg") << "# desk run\nphi = 1\nsplit=3-3\n\nepochs=3 # short\n";
  const auto kv = read_config_file(ws / "run.cfg");
  CHECK(kv.at("phi") == "1");
  CHECK(kv.at("epochs") == "3");
  RunConfig cfg;
  cfg.apply(kv);
  CHECK(cfg.split == "3-3");
  RunConfig back;
  back.apply(cfg.to_key_values());
  CHECK(format_config(back) == format_config(cfg));
  std::ofstream(ws / "bad.cfg") << "phi 1\n";
  CHECK(cli({"train", "--config", (ws / "bad.cfg").string()}).code == kExitUsage);
  CHECK(cli({"train", "--config", (ws / "absent.cfg").string()}).code == kExitMissingInput);
}

TEST_CASE("enhance wraps brighten_constant") {
  Workspace ws;
  PixelImage img(6, 4, 30);
  img.at(0, 0, 0) = 240;
  write_image(ws / "in.png", img);
  auto r = cli({"enhance", "--enhance", "const", "--c", "40", (ws / "in.png").string(), (ws / "out.png").string()});
  REQUIRE(r.code == 0);
  const auto out = read_image(ws / "out.png");
  CHECK(out == brighten_constant(img, 40));
  CHECK(out.at(0, 0, 0) == 255);
  CHECK(last_json_line(r.out)["strategy"] == "c=40");
  CHECK(fs::exists(fs::path(last_json_line(r.out)["run_dir"].get<std::string>()) / "manifest.json"));

  r = cli({"enhance", "--darken-offset", "20", (ws / "in.png").string(), (ws / "dark.png").string()});
  CHECK(read_image(ws / "dark.png").at(1, 1, 0) == 10);

  r = cli({"enhance", "--enhance", "external", "--external-cmd", "false", (ws / "in.png").string(),
           (ws / "x.png").string()});
  CHECK(r.code == kExitRuntime);
  CHECK(last_json_line(r.err)["error"]["kind"] == "runtime");
  r = cli({"enhance", "--enhance", "const", "--c", "1", (ws / "nope.png").string(), (ws / "x.png").string()});
  CHECK(r.code == kExitMissingInput);
}

TEST_CASE("infer applies tau") {
  Workspace ws;
  auto det = Detector<float>::build(desk_config(ScalingSpec::from_split(0, "1-5")), 2, 1);
  auto& params = det.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params.name(static_cast<int>(i)) == "class_net.predict.bias") {
      auto& b = params[static_cast<int>(i)];
      for (Eigen::Index k = 0; k < b.rows(); ++k) b(k, 0) = 1.5f + 0.25f * static_cast<float>(k % 9);
    }
  save_checkpoint(ws / "hot.ckpt", det, synth_class_map(2));
  write_image(ws / "a.png", synth_shapes(1, 128, 2, 1)[0].image);

  std::map<double, std::size_t> counts;
  for (double tau : {0.95, 0.5}) {
    const auto r = cli({"infer", "--checkpoint", (ws / "hot.ckpt").string(), "--tau", std::to_string(tau),
                        "--max-detections", "100000", (ws / "a.png").string()});
    REQUIRE(r.code == 0);
    const auto summary = last_json_line(r.out);
    std::ifstream in(summary["detections"].get<std::string>());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      const auto d = json::parse(line);
      CHECK(d["score"].get<double>() >= tau);
      CHECK(d["image"] == (ws / "a.png").string());
      ++n;
    }
    counts[tau] = n;
  }
  CHECK(counts[0.95] > 0);
  CHECK(counts[0.95] < counts[0.5]);
  CHECK(cli({"infer", "--checkpoint", (ws / "none.ckpt").string()}).code == kExitMissingInput);
}

TEST_CASE("eval reports ap, ap50, ap75") {
  Workspace ws;
  std::ofstream(ws / "gt.json") << R"([{"image": "x.png", "boxes": [{"xmin": 0, "ymin": 0, "xmax": 10, "ymax": 10, "class": "bag"}]}])";
  std::ofstream(ws / "p.jsonl") << R"({"image": "x.png", "box": [0, 0, 10, 6], "class": "bag", "score": 0.9})" << "\n";
  const auto r = cli({"eval", "--pred", (ws / "p.jsonl").string(), "--gt", (ws / "gt.json").string(), "--classes",
                      "wpbb"});
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["ap50"] == 100.0);
  CHECK(j["ap75"] == 0.0);
  CHECK(j.contains("ap"));
}

TEST_CASE("train manifest reproduces the run; study end to end") {
  Workspace ws;
  auto r = cli(with({"train", "--epochs", "1", "--width", "16"}, kTiny));
  REQUIRE(r.code == 0);
  const auto first = last_json_line(r.out);
  const fs::path run_dir = first["run_dir"].get<std::string>();
  CHECK(run_dir.parent_path() == ws / "runs");
  for (const char* f : {"model.ckpt", "loss.csv", "eval.json", "eval.csv", "manifest.json"})
    CHECK(fs::exists(run_dir / f));

  r = cli({"train", "--config", (run_dir / "manifest.json").string()});
  REQUIRE(r.code == 0);
  const auto second = last_json_line(r.out);
  CHECK(second["eval"] == first["eval"]);
  CHECK(second["final_loss"] == first["final_loss"]);
  CHECK(slurp(fs::path(second["run_dir"].get<std::string>()) / "model.ckpt") == slurp(run_dir / "model.ckpt"));

  const auto ckpt = (run_dir / "model.ckpt").string();
  const auto study = with({"study", "--checkpoint", ckpt, "--specs", "none,c=40,c=80,external", "--external-cmd", "cp"},
                          kTiny);
  r = cli(study);
  REQUIRE(r.code == 0);
  const fs::path s1 = last_json_line(r.out)["run_dir"].get<std::string>();
  for (const char* f : {"report.csv", "frontier.svg", "manifest.json"}) CHECK(fs::exists(s1 / f));
  const auto rows = report_metrics(slurp(s1 / "report.csv"));
  CHECK(rows.size() == 5);
  r = cli(study);
  const fs::path s2 = last_json_line(r.out)["run_dir"].get<std::string>();
  CHECK(report_metrics(slurp(s2 / "report.csv")) == rows);

  r = cli(with({"study", "--checkpoint", ckpt, "--specs", "none,external", "--external-cmd", "false"}, kTiny));
  CHECK(r.code == 0);
  CHECK(last_json_line(r.out)["rows"].size() == 1);
  CHECK(last_json_line(r.out)["failed"].size() == 1);

  r = cli({"study", "--checkpoint", (ws / "missing.ckpt").string()});
  CHECK(r.code == kExitMissingInput);
  CHECK(last_json_line(r.err)["error"]["message"].get<std::string>().find("missing.ckpt") != std::string::npos);

  r = cli(with({"bench", "--checkpoint", ckpt, "--variants", "0", "--runs", "3", "--warmup", "1", "--out",
                (ws / "explicit").string()},
               kTiny));
  REQUIRE(r.code == 0);
  const fs::path b = last_json_line(r.out)["run_dir"].get<std::string>();
  CHECK(b.parent_path() == ws / "explicit");
  CHECK(fs::exists(b / "latency.csv"));
  CHECK(last_json_line(r.out)["rows"].size() == 2);
}
