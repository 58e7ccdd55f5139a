#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "hqnn/beamforming.hpp"
#include "hqnn/cli.hpp"

namespace fs = std::filesystem;
using hqnn::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "hqnn");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("hqnn_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream is(p);
  return nlohmann::json::parse(is);
}

}  // namespace

TEST_CASE("generate-data") {
  const auto dir = fresh_dir("gen");
  auto r = call({"--out-dir", dir.string(), "generate-data", "--n-train", "40", "--n-test", "10", "--csv"});
  REQUIRE(r.code == 0);
  const auto h = hqnn::bf::read_dataset_header(dir / "train.bfq");
  CHECK(h.K == 4);
  CHECK(h.Nt == 4);
  CHECK(h.n_samples == 40);
  CHECK(fs::exists(dir / "test.csv"));
  const auto first = hqnn::bf::file_checksum(dir / "train.bfq");
  const auto manifest = read_json(dir / "manifest_generate-data.json");
  CHECK(manifest["config"]["seed"] == 0);
  CHECK(manifest["outputs"][0]["crc32"] == first);

  r = call({"--out-dir", dir.string(), "generate-data", "--n-train", "40", "--n-test", "10"});
  CHECK(hqnn::bf::file_checksum(dir / "train.bfq") == first);
  r = call({"--out-dir", dir.string(), "generate-data", "--n-train", "40", "--n-test", "10", "--seed", "1"});
  CHECK(hqnn::bf::file_checksum(dir / "train.bfq") != first);

  CHECK(call({"generate-data", "--K", "0", "--out-dir", dir.string()}).code == hqnn::cli::kExitUsage);
  CHECK(call({"no-such-command"}).code == hqnn::cli::kExitUsage);
  CHECK(call({"--help"}).code == 0);
  fs::remove_all(dir);
}

TEST_CASE("train, evaluate and noise-sweep") {
  const auto dir = fresh_dir("train");
  const std::string d = dir.string();
  REQUIRE(call({"--out-dir", d, "generate-data", "--n-train", "200", "--n-test", "40"}).code == 0);

  auto r = call({"--out-dir", d, "train", "--model", "classical", "--epochs", "2", "--batch", "40"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "classical_cnn.ckpt"));
  CHECK(fs::exists(dir / "classical_cnn.final.ckpt"));
  const auto lines = slurp(dir / "classical_cnn.metrics.jsonl");
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 4);  // epochs 0..2 plus the summary

  r = call({"--out-dir", d, "train", "--model", "qnn_transfer", "--epochs", "1"});
  CHECK(r.code == hqnn::cli::kExitUsage);
  CHECK(r.err.find("--pretrained") != std::string::npos);

  r = call({"--out-dir", d, "train", "--model", "qcnn", "--K", "5"});
  CHECK(r.code == hqnn::cli::kExitUsage);
  CHECK(r.err.find("even") != std::string::npos);

  r = call({"--out-dir", d, "train", "--model", "classical", "--K", "6", "--epochs", "1"});
  CHECK(r.code == hqnn::cli::kExitUsage);
  CHECK(r.err.find("dataset is K=4") != std::string::npos);

  r = call({"--out-dir", d, "train", "--model", "qnn_transfer", "--pretrained", (dir / "classical_cnn.ckpt").string(),
            "--epochs", "1", "--batch", "40"});
  REQUIRE(r.code == 0);
  const auto summary = nlohmann::json::parse(
      slurp(dir / "hybrid_qnn_transfer.metrics.jsonl").substr(slurp(dir / "hybrid_qnn_transfer.metrics.jsonl").rfind("{\"summary")));
  CHECK(summary["summary"]["updated_scalars"] == summary["summary"]["closed_form_params"]);

  r = call({"--out-dir", d, "evaluate", "--checkpoint", (dir / "classical_cnn.ckpt").string(), "--sigma-e2", "0.1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("WMMSE") != std::string::npos);
  CHECK(r.out.find("1.0000") != std::string::npos);
  CHECK(r.out.find("p90") != std::string::npos);
  CHECK(r.out.find("sigma_e2=0.1") != std::string::npos);
  const auto report = read_json(dir / "evaluate.json");
  CHECK(report["rows"][0]["normalized_rate"] == 1.0);
  CHECK(report["rows"].size() == 3);
  CHECK(fs::exists(dir / "test.bfq.wmmse.json"));
  // A second run reads the WMMSE sidecar and reproduces the report exactly.
  const auto first = slurp(dir / "evaluate.json");
  REQUIRE(call({"--out-dir", d, "evaluate", "--checkpoint", (dir / "classical_cnn.ckpt").string(), "--sigma-e2", "0.1"}).code == 0);
  CHECK(slurp(dir / "evaluate.json") == first);

  r = call({"--out-dir", d, "noise-sweep", "--checkpoint", (dir / "classical_cnn.ckpt").string()});
  CHECK(r.code == hqnn::cli::kExitUsage);

  r = call({"--out-dir", d, "noise-sweep", "--checkpoint", (dir / "hybrid_qnn_transfer.ckpt").string(), "--mse",
            "--p", "0.1", "0.3"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("qnn_out_mse") != std::string::npos);
  CHECK(r.out.find("non-increasing in p") != std::string::npos);
  const auto sweep = read_json(dir / "noise_sweep.json");
  CHECK(sweep["cells"].size() == 4);
  CHECK(sweep["config"]["channels"] == nlohmann::json({"bit_flip", "depolarizing"}));
  fs::remove_all(dir);
}

TEST_CASE("config file precedence and the output-directory variable") {
  const auto dir = fresh_dir("cfg");
  {
    std::ofstream os(dir / "run.json");
    os << R"({"n-train": 30, "n-test": 5, "seed": 4})";
  }
  setenv(hqnn::cli::kOutDirEnv, dir.string().c_str(), 1);
  auto r = call({"--config", (dir / "run.json").string(), "generate-data", "--seed", "9"});
  unsetenv(hqnn::cli::kOutDirEnv);
  REQUIRE(r.code == 0);
  const auto m = read_json(dir / "manifest_generate-data.json");
  CHECK(m["config"]["seed"] == 9);
  CHECK(m["config"]["n-train"] == 30);
  CHECK(call({"--config", (dir / "missing.json").string(), "verify"}).code == hqnn::cli::kExitUsage);
  fs::remove_all(dir);
}

TEST_CASE("divergence exits with code 3") {
  const auto dir = fresh_dir("nan");
  hqnn::bf::SystemParams s;
  auto samples = hqnn::bf::generate_dataset(60, s, 1);
  samples[7].H(0, 0) = std::numeric_limits<double>::quiet_NaN();
  hqnn::bf::write_dataset(dir / "train.bfq", samples);
  const auto r = call({"--out-dir", dir.string(), "train", "--epochs", "1", "--batch", "20"});
  CHECK(r.code == hqnn::cli::kExitDivergence);
  CHECK(r.err.find("diverged") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("verify") {
  auto r = call({"verify", "--suite", "params", "--K", "8"});
  CHECK(r.code == 0);
  for (const char* n : {"2664", "1204", "604", "2380"}) CHECK(r.out.find(n) != std::string::npos);
  r = call({"verify", "--suite", "grad", "--cases", "10"});
  CHECK(r.code == 0);
  CHECK(call({"verify", "--suite", "nonsense"}).code == hqnn::cli::kExitVerifyFailed);

  // The installed binary behaves the same.
  if (const char* bin = std::getenv("HQNN_CLI_BIN")) {
    const std::string cmd = std::string(bin) + " verify --suite gates > /dev/null";
    CHECK(std::system(cmd.c_str()) == 0);
  }
}
