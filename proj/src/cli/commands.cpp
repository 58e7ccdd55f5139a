#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "hqnn/beamforming.hpp"
#include "hqnn/cli.hpp"
#include "hqnn/models.hpp"
#include "hqnn/trainer.hpp"

#ifndef HQNN_VERSION
#define HQNN_VERSION "dev"
#endif

namespace hqnn::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- settings

struct GenerateArgs {
  int K = 4;
  int Nt = 4;
  int n_train = 10000;
  int n_test = 1000;
  std::uint64_t seed = 0;
  bool csv = false;
};

struct TrainArgs {
  std::string data;
  std::string model = "classical";
  int K = 0;  // 0: take from the dataset
  int Nt = 0;
  int F = 8;
  int m = 3;
  int L = 2;
  int Q = 0;  // 0: per-kind default
  std::string embedding;
  int epochs = 150;
  int batch = 100;
  double lr = 0.001;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  int n_train = 0;  // 0: every sample in the file
  std::string pretrained;
  std::string checkpoint;
  std::string snapshot = "best";
};

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::vector<double> sigma_e2;
  std::uint64_t csi_seed = 0;
  int n_test = 0;
  std::string report = "evaluate";
  bool no_cache = false;
};

struct SweepArgs {
  std::string checkpoint;
  std::string data;
  std::vector<std::string> channels{"bit_flip", "depolarizing"};
  std::vector<double> p{0.01, 0.1, 0.2, 0.3, 0.4, 0.5};
  bool mse = false;
  int shots = 0;
  std::uint64_t shot_seed = 0;
  int n_test = 0;
  std::string report = "noise_sweep";
};

struct Globals {
  std::string out_dir;
  std::string config;
  bool serial = false;

  Exec exec() const { return serial ? Exec::serial : Exec::parallel; }
};

template <class T>
void take(const json& j, const char* key, T& v) {
  if (j.contains(key)) v = j.at(key).get<T>();
}

/// Config file keys use the long flag names ("n-train", "K", ...).
void apply_config(const json& j, GenerateArgs& g, TrainArgs& t, EvaluateArgs& e, SweepArgs& s) {
  take(j, "K", g.K);
  take(j, "Nt", g.Nt);
  take(j, "n-train", g.n_train);
  take(j, "n-test", g.n_test);
  take(j, "seed", g.seed);
  take(j, "csv", g.csv);
  take(j, "data", t.data);
  take(j, "model", t.model);
  take(j, "K", t.K);
  take(j, "Nt", t.Nt);
  take(j, "F", t.F);
  take(j, "m", t.m);
  take(j, "L", t.L);
  take(j, "Q", t.Q);
  take(j, "embedding", t.embedding);
  take(j, "epochs", t.epochs);
  take(j, "batch", t.batch);
  take(j, "lr", t.lr);
  take(j, "seed", t.seed);
  take(j, "val-fraction", t.val_fraction);
  take(j, "n-train", t.n_train);
  take(j, "pretrained", t.pretrained);
  take(j, "checkpoint", t.checkpoint);
  take(j, "snapshot", t.snapshot);
  take(j, "checkpoint", e.checkpoint);
  take(j, "data", e.data);
  take(j, "sigma-e2", e.sigma_e2);
  take(j, "csi-seed", e.csi_seed);
  take(j, "n-test", e.n_test);
  take(j, "checkpoint", s.checkpoint);
  take(j, "data", s.data);
  take(j, "channels", s.channels);
  take(j, "p", s.p);
  take(j, "mse", s.mse);
  take(j, "shots", s.shots);
  take(j, "shot-seed", s.shot_seed);
  take(j, "n-test", s.n_test);
}

std::string find_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

// ---------------------------------------------------------------- files

fs::path resolve_out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return ".";
}

json file_entry(const fs::path& p) { return {{"file", p.filename().string()}, {"crc32", bf::file_checksum(p)}}; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << text;
}

/// Echoes the resolved config plus input / output checksums. File names only,
/// so identical runs in different directories produce identical manifests.
void write_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  json in = json::array(), out = json::array();
  for (const auto& p : inputs) in.push_back(file_entry(p));
  for (const auto& p : outputs) out.push_back(file_entry(p));
  const json m{{"command", command}, {"code_version", HQNN_VERSION}, {"config", config}, {"inputs", in}, {"outputs", out}};
  write_text(out_dir / ("manifest_" + command + ".json"), m.dump(2) + "\n");
}

bf::SystemParams system_for(int K, int Nt) {
  bf::SystemParams s;
  s.K = K;
  s.Nt = Nt;
  return s;
}

std::vector<bf::ChannelSample> load_samples(const fs::path& path, int K, int Nt, int limit) {
  if (!fs::exists(path)) throw UsageError("dataset '" + path.string() + "' does not exist");
  const auto header = bf::read_dataset_header(path);
  if (header.K != K || header.Nt != Nt) {
    throw models::ConfigError("dataset is K=" + std::to_string(header.K) + ", Nt=" + std::to_string(header.Nt) +
                              " but the model expects K=" + std::to_string(K) + ", Nt=" + std::to_string(Nt));
  }
  auto samples = bf::read_dataset(path, system_for(K, Nt));
  if (limit > 0 && static_cast<std::size_t>(limit) < samples.size()) samples.resize(static_cast<std::size_t>(limit));
  return samples;
}

/// WMMSE rates cached next to the dataset, keyed by its checksum and the solver settings.
std::vector<double> cached_wmmse(const fs::path& data, const std::vector<bf::ChannelSample>& samples, double P,
                                 bool use_cache, Exec exec) {
  const bf::WmmseOptions opts;
  const fs::path sidecar = data.string() + ".wmmse.json";
  const json key{{"dataset_crc32", bf::file_checksum(data)},
                 {"n", samples.size()},
                 {"power_w", P},
                 {"max_iter", opts.max_iter},
                 {"tol", opts.tol},
                 {"bisection_tol", opts.bisection_tol}};
  if (use_cache && fs::exists(sidecar)) {
    try {
      std::ifstream is(sidecar);
      const json j = json::parse(is);
      if (j.at("key") == key) return j.at("rates").get<std::vector<double>>();
    } catch (const json::exception&) {
      // stale or corrupt cache: recompute below
    }
  }
  auto rates = bf::wmmse_rates(samples, P, opts, exec);
  if (use_cache) write_text(sidecar, json{{"key", key}, {"rates", rates}}.dump() + "\n");
  return rates;
}

std::string fixed(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------- commands

int cmd_generate(const GenerateArgs& a, const Globals& g, std::ostream& out) {
  const auto sys = system_for(a.K, a.Nt);
  sys.validate();
  if (a.n_train < 1 || a.n_test < 1) throw UsageError("--n-train and --n-test must be >= 1");
  const fs::path dir = resolve_out_dir(g.out_dir);
  fs::create_directories(dir);
  const auto train = bf::generate_dataset(a.n_train, sys, a.seed, 0, g.exec());
  const auto test = bf::generate_dataset(a.n_test, sys, a.seed, 1, g.exec());
  std::vector<fs::path> outputs{dir / "train.bfq", dir / "test.bfq"};
  bf::write_dataset(outputs[0], train);
  bf::write_dataset(outputs[1], test);
  if (a.csv) {
    outputs.push_back(dir / "train.csv");
    outputs.push_back(dir / "test.csv");
    bf::write_dataset_csv(outputs[2], train);
    bf::write_dataset_csv(outputs[3], test);
  }
  const json config{{"K", a.K},       {"Nt", a.Nt},     {"n-train", a.n_train}, {"n-test", a.n_test},
                    {"seed", a.seed}, {"csv", a.csv},   {"tx_power_dbm", sys.tx_power_dbm},
                    {"bandwidth_hz", sys.bandwidth_hz}, {"noise_psd_dbm_per_hz", sys.noise_psd_dbm_per_hz}};
  write_manifest(dir, "generate-data", config, {}, outputs);
  for (const auto& p : outputs) out << "wrote " << p.string() << "  crc32 " << bf::file_checksum(p) << "\n";
  return kExitOk;
}

int cmd_train(const TrainArgs& a, const Globals& g, std::ostream& out) {
  const auto kind = models::parse_model_kind(a.model);
  if (kind == models::ModelKind::hybrid_qnn_transfer && a.pretrained.empty()) {
    throw UsageError("--model qnn_transfer requires --pretrained <classical checkpoint>");
  }
  const fs::path dir = resolve_out_dir(g.out_dir);
  const fs::path data = a.data.empty() ? dir / "train.bfq" : fs::path(a.data);

  auto build_cfg = [&](int K, int Nt) {
    auto cfg = models::ModelConfig::defaults(kind, K, Nt);
    cfg.F = a.F;
    cfg.m = a.m;
    cfg.L = a.L;
    if (a.Q > 0) cfg.Q = a.Q;
    if (!a.embedding.empty()) cfg.embedding = qlayers::parse_embedding(a.embedding);
    if (!a.pretrained.empty()) cfg.pretrained_checkpoint = a.pretrained;
    cfg.validate();
    return cfg;
  };
  // Surface configuration errors before touching the dataset.
  if (a.K > 0) build_cfg(a.K, a.Nt > 0 ? a.Nt : a.K);
  if (!fs::exists(data)) throw UsageError("dataset '" + data.string() + "' does not exist");
  const auto header = bf::read_dataset_header(data);
  const int K = a.K > 0 ? a.K : header.K;
  const int Nt = a.Nt > 0 ? a.Nt : header.Nt;
  const auto mcfg = build_cfg(K, Nt);
  const auto samples = load_samples(data, K, Nt, a.n_train);

  trainer::TrainConfig tcfg;
  tcfg.epochs = a.epochs;
  tcfg.batch_size = a.batch;
  tcfg.lr = a.lr;
  tcfg.n_train = static_cast<int>(samples.size());
  tcfg.validation_fraction = a.val_fraction;
  tcfg.seed = a.seed;
  tcfg.model = mcfg;
  tcfg.system = system_for(K, Nt);
  tcfg.exec = g.exec();
  if (a.snapshot != "best" && a.snapshot != "final") throw UsageError("--snapshot must be best or final");

  std::vector<fs::path> inputs{data};
  std::optional<models::Model> initial;
  if (kind == models::ModelKind::hybrid_qnn_transfer) {
    const auto pre = models::load_checkpoint(a.pretrained);
    initial = models::Model::transfer_from(pre, mcfg, derive_seed(a.seed, 0x1417));
    inputs.emplace_back(a.pretrained);
  }

  fs::create_directories(dir);
  const fs::path ckpt = a.checkpoint.empty() ? dir / (std::string(models::to_string(kind)) + ".ckpt")
                                             : fs::path(a.checkpoint);
  fs::path metrics_path = ckpt;
  metrics_path.replace_extension(".metrics.jsonl");
  fs::path final_path = ckpt;
  final_path.replace_extension(".final.ckpt");

  std::ostringstream jsonl;
  out << std::setw(6) << "epoch" << std::setw(14) << "train_loss" << std::setw(14) << "val_loss" << "\n";
  auto result = trainer::train(tcfg, samples, std::move(initial), [&](const trainer::EpochRecord& r) {
    out << std::setw(6) << r.epoch << std::setw(14) << fixed(r.train_loss, 6) << std::setw(14)
        << fixed(r.val_loss, 6) << "\n";
    jsonl << json{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}}.dump() << "\n";
  });
  const auto& m = result.metrics;
  jsonl << json{{"summary",
                 {{"best_epoch", m.best_epoch},
                  {"best_val_loss", m.best_val_loss},
                  {"final_val_loss", m.epochs.back().val_loss},
                  {"updated_scalars", m.updated_scalars},
                  {"trainable_scalars", result.best.trainable_scalars()},
                  {"closed_form_params", models::count_params(mcfg)},
                  {"snapshot", a.snapshot}}}}
               .dump()
        << "\n";

  models::save_checkpoint(a.snapshot == "best" ? result.best : result.final, ckpt);
  models::save_checkpoint(result.final, final_path);
  write_text(metrics_path, jsonl.str());

  json config = tcfg.to_json();
  config["data"] = data.filename().string();
  config["snapshot"] = a.snapshot;
  config["checkpoint"] = ckpt.filename().string();
  write_manifest(dir, "train", config, inputs, {ckpt, final_path, metrics_path});

  out << "best epoch " << m.best_epoch << " (val loss " << fixed(m.best_val_loss, 6) << "), updated scalars "
      << m.updated_scalars << ", wall time " << fixed(m.wall_seconds, 1) << " s\n";
  out << "wrote " << ckpt.string() << ", " << final_path.string() << ", " << metrics_path.string() << "\n";
  return kExitOk;
}

struct ReportRow {
  std::string scheme;
  double normalized;
  double sum_rate;
  std::vector<double> ratios;
  json extra = json::object();
};

void emit_report(const fs::path& dir, const std::string& name, const std::vector<ReportRow>& rows,
                 const json& header, std::ostream& out, std::vector<fs::path>& outputs) {
  std::ostringstream txt;
  txt << std::left << std::setw(34) << "scheme" << std::right << std::setw(12) << "normalized" << std::setw(12)
      << "sum_rate" << std::setw(9) << "p10" << std::setw(9) << "p50" << std::setw(9) << "p90" << "\n";
  json records = json::array();
  for (const auto& r : rows) {
    const double p10 = trainer::quantile(r.ratios, 0.1), p50 = trainer::quantile(r.ratios, 0.5),
                 p90 = trainer::quantile(r.ratios, 0.9);
    txt << std::left << std::setw(34) << r.scheme << std::right << std::setw(12) << fixed(r.normalized)
        << std::setw(12) << fixed(r.sum_rate) << std::setw(9) << fixed(p10) << std::setw(9) << fixed(p50)
        << std::setw(9) << fixed(p90) << "\n";
    json rec{{"scheme", r.scheme}, {"normalized_rate", r.normalized}, {"sum_rate", r.sum_rate},
             {"p10", p10},         {"p50", p50},                      {"p90", p90}};
    rec.update(r.extra);
    records.push_back(rec);
  }
  out << txt.str();
  outputs.push_back(dir / (name + ".txt"));
  outputs.push_back(dir / (name + ".json"));
  write_text(outputs[outputs.size() - 2], txt.str());
  json doc = header;
  doc["rows"] = records;
  write_text(outputs.back(), doc.dump(2) + "\n");
}

int cmd_evaluate(const EvaluateArgs& a, const Globals& g, std::ostream& out) {
  if (a.checkpoint.empty()) throw UsageError("--checkpoint is required");
  const fs::path dir = resolve_out_dir(g.out_dir);
  const fs::path data = a.data.empty() ? dir / "test.bfq" : fs::path(a.data);
  auto model = models::load_checkpoint(a.checkpoint);
  const auto& mc = model.config();
  const auto sys = system_for(mc.K, mc.Nt);
  const double P = sys.power_w();
  const auto test = load_samples(data, mc.K, mc.Nt, a.n_test);
  const auto wmmse = cached_wmmse(data, test, P, !a.no_cache && a.n_test == 0, g.exec());

  std::vector<ReportRow> rows;
  {
    // Reference row: WMMSE normalized by itself.
    std::vector<double> ratios(wmmse.size());
    double mean = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < wmmse.size(); ++i) {
      ratios[i] = wmmse[i] > 0.0 ? wmmse[i] / wmmse[i] : 1.0;
      mean += wmmse[i];
      norm += ratios[i];
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, wmmse.size()));
    rows.push_back({"WMMSE", norm / n, mean / n, ratios});
  }
  const std::string name(models::to_string(mc.kind));
  {
    const auto m = trainer::evaluate(model, test, wmmse, P, g.exec());
    rows.push_back({name, m.normalized_rate, m.test_sum_rate, m.ratios});
  }
  for (double s2 : a.sigma_e2) {
    if (!(s2 >= 0.0)) throw UsageError("--sigma-e2 values must be >= 0");
    const auto truth = trainer::perturb_channels(test, s2, a.csi_seed, P, g.exec());
    const auto m = trainer::evaluate_imperfect_csi(model, test, truth, P, g.exec());
    std::ostringstream label;
    label << name << " sigma_e2=" << s2;
    rows.push_back({label.str(), m.normalized_rate, m.test_sum_rate, m.ratios, json{{"sigma_e2", s2}}});
  }

  fs::create_directories(dir);
  const json config{{"checkpoint", fs::path(a.checkpoint).filename().string()},
                    {"data", data.filename().string()},
                    {"model", mc.to_json()},
                    {"n_test", test.size()},
                    {"sigma-e2", a.sigma_e2},
                    {"csi-seed", a.csi_seed}};
  std::vector<fs::path> outputs;
  emit_report(dir, a.report, rows, json{{"command", "evaluate"}, {"config", config}}, out, outputs);
  write_manifest(dir, "evaluate", config, {a.checkpoint, data}, outputs);
  return kExitOk;
}

int cmd_noise_sweep(const SweepArgs& a, const Globals& g, std::ostream& out) {
  if (a.checkpoint.empty()) throw UsageError("--checkpoint is required");
  const fs::path dir = resolve_out_dir(g.out_dir);
  const fs::path data = a.data.empty() ? dir / "test.bfq" : fs::path(a.data);
  auto model = models::load_checkpoint(a.checkpoint);
  if (!model.has_quantum_layer()) throw models::ConfigError("noise-sweep needs a checkpoint with a quantum layer");
  const auto& mc = model.config();
  const double P = system_for(mc.K, mc.Nt).power_w();
  const auto test = load_samples(data, mc.K, mc.Nt, a.n_test);
  const auto wmmse = cached_wmmse(data, test, P, a.n_test == 0, g.exec());
  std::vector<double> ps = a.p;
  std::sort(ps.begin(), ps.end());
  for (double p : ps)
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError("--p values must lie in [0, 1]");

  const double clean = trainer::evaluate(model, test, wmmse, P, g.exec()).normalized_rate;
  std::ostringstream txt;
  txt << std::left << std::setw(14) << "channel" << std::right << std::setw(8) << "p" << std::setw(12) << "normalized";
  if (a.mse) txt << std::setw(14) << "qnn_out_mse";
  txt << "  flag\n";
  txt << std::left << std::setw(14) << "none" << std::right << std::setw(8) << fixed(0.0, 2) << std::setw(12)
      << fixed(clean) << "\n";
  json cells = json::array();
  bool all_monotone = true;
  for (const auto& ch : a.channels) {
    const auto kind = qsim::parse_noise_kind(ch);
    double prev = clean;
    bool monotone = true;
    for (double p : ps) {
      const qlayers::NoiseSpec noise{kind, p};
      const double nr = trainer::evaluate_noisy(model, test, wmmse, P, noise, a.shots, a.shot_seed, g.exec()).normalized_rate;
      const bool violation = nr > prev;
      monotone &= !violation;
      prev = nr;
      json cell{{"channel", std::string(qsim::to_string(kind))}, {"p", p}, {"normalized_rate", nr}, {"violation", violation}};
      txt << std::left << std::setw(14) << qsim::to_string(kind) << std::right << std::setw(8) << fixed(p, 2)
          << std::setw(12) << fixed(nr);
      if (a.mse) {
        const double mse = trainer::qnn_output_mse(model, test, noise, a.shots, a.shot_seed, g.exec());
        cell["qnn_output_mse"] = mse;
        txt << std::setw(14) << std::scientific << std::setprecision(4) << mse << std::defaultfloat;
      }
      txt << (violation ? "  NOT-MONOTONE" : "") << "\n";
      cells.push_back(cell);
    }
    all_monotone &= monotone;
  }
  txt << "non-increasing in p: " << (all_monotone ? "yes" : "NO") << "\n";
  out << txt.str();

  fs::create_directories(dir);
  const json config{{"checkpoint", fs::path(a.checkpoint).filename().string()},
                    {"data", data.filename().string()},
                    {"channels", a.channels},
                    {"p", ps},
                    {"mse", a.mse},
                    {"shots", a.shots},
                    {"shot-seed", a.shot_seed},
                    {"n_test", test.size()}};
  const std::vector<fs::path> outputs{dir / (a.report + ".txt"), dir / (a.report + ".json")};
  write_text(outputs[0], txt.str());
  write_text(outputs[1], json{{"command", "noise-sweep"},
                              {"config", config},
                              {"noiseless_normalized_rate", clean},
                              {"monotone", all_monotone},
                              {"cells", cells}}
                                 .dump(2) +
                             "\n");
  write_manifest(dir, "noise-sweep", config, {a.checkpoint, data}, outputs);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  GenerateArgs gen;
  TrainArgs tr;
  EvaluateArgs ev;
  SweepArgs sw;
  VerifyOptions ver;
  Globals glob;

  try {
    if (const auto cfg_path = find_config_path(args); !cfg_path.empty()) {
      std::ifstream is(cfg_path);
      if (!is) throw UsageError("cannot open config file '" + cfg_path + "'");
      apply_config(json::parse(is), gen, tr, ev, sw);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  CLI::App app{"Hybrid quantum-classical beamforming toolkit"};
  app.require_subcommand(1);
  app.add_option("--out-dir", glob.out_dir, std::string("output directory (default $") + kOutDirEnv + " or .)");
  app.add_option("--config", glob.config, "JSON file with default flag values; flags take precedence");
  app.add_flag("--serial", glob.serial, "run the serial reference kernels");

  auto* g = app.add_subcommand("generate-data", "generate train / test channel datasets");
  g->add_option("--K", gen.K, "users")->capture_default_str();
  g->add_option("--Nt", gen.Nt, "transmit antennas")->capture_default_str();
  g->add_option("--n-train", gen.n_train, "training samples")->capture_default_str();
  g->add_option("--n-test", gen.n_test, "test samples")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_flag("--csv", gen.csv, "also write CSV mirrors");

  auto* t = app.add_subcommand("train", "train a power-vector network");
  t->add_option("--data", tr.data, "training dataset (default <out-dir>/train.bfq)");
  t->add_option("--model", tr.model, "classical | qnn | qnn_transfer | qcnn")->capture_default_str();
  t->add_option("--K", tr.K, "users (default: from the dataset)");
  t->add_option("--Nt", tr.Nt, "antennas (default: from the dataset)");
  t->add_option("--F", tr.F, "conv filters")->capture_default_str();
  t->add_option("--m", tr.m, "conv kernel size")->capture_default_str();
  t->add_option("--L", tr.L, "circuit layers")->capture_default_str();
  t->add_option("--Q", tr.Q, "qubits (default 4 for qnn kinds, 2 for qcnn)");
  t->add_option("--embedding", tr.embedding, "angle | angle_with_hadamard | amplitude");
  t->add_option("--epochs", tr.epochs)->capture_default_str();
  t->add_option("--batch", tr.batch)->capture_default_str();
  t->add_option("--lr", tr.lr)->capture_default_str();
  t->add_option("--seed", tr.seed)->capture_default_str();
  t->add_option("--val-fraction", tr.val_fraction)->capture_default_str();
  t->add_option("--n-train", tr.n_train, "use only the first n samples (0 = all)");
  t->add_option("--pretrained", tr.pretrained, "classical checkpoint for qnn_transfer");
  t->add_option("--checkpoint", tr.checkpoint, "output checkpoint (default <out-dir>/<model>.ckpt)");
  t->add_option("--snapshot", tr.snapshot, "best | final")->capture_default_str();

  auto* e = app.add_subcommand("evaluate", "normalized rate against WMMSE");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--data", ev.data, "test dataset (default <out-dir>/test.bfq)");
  e->add_option("--sigma-e2", ev.sigma_e2, "channel estimation error variances");
  e->add_option("--csi-seed", ev.csi_seed)->capture_default_str();
  e->add_option("--n-test", ev.n_test, "use only the first n samples (0 = all)");
  e->add_option("--report", ev.report, "report base name")->capture_default_str();
  e->add_flag("--no-cache", ev.no_cache, "do not read or write the WMMSE sidecar");

  auto* s = app.add_subcommand("noise-sweep", "noisy-circuit evaluation grid");
  s->add_option("--checkpoint", sw.checkpoint)->required();
  s->add_option("--data", sw.data, "test dataset (default <out-dir>/test.bfq)");
  s->add_option("--channels", sw.channels, "bit_flip | phase_flip | depolarizing")->capture_default_str();
  s->add_option("--p", sw.p, "error probabilities")->capture_default_str();
  s->add_flag("--mse", sw.mse, "add the quantum-output MSE column");
  s->add_option("--shots", sw.shots, "0 = exact expectations")->capture_default_str();
  s->add_option("--shot-seed", sw.shot_seed)->capture_default_str();
  s->add_option("--n-test", sw.n_test, "use only the first n samples (0 = all)");
  s->add_option("--report", sw.report, "report base name")->capture_default_str();

  auto* v = app.add_subcommand("verify", "run the invariant suites");
  v->add_option("--suite", ver.suite, "all | gates | kraus | grad | wmmse | params")->capture_default_str();
  v->add_option("--K", ver.K, "K = Nt for the params table")->capture_default_str();
  v->add_option("--cases", ver.grad_cases, "random circuits for the grad suite")->capture_default_str();
  v->add_option("--seed", ver.seed)->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_generate(gen, glob, out);
    if (t->parsed()) return cmd_train(tr, glob, out);
    if (e->parsed()) return cmd_evaluate(ev, glob, out);
    if (s->parsed()) return cmd_noise_sweep(sw, glob, out);
    if (v->parsed()) {
      const bool ok = run_verify(ver, out);
      if (!glob.out_dir.empty() || std::getenv(kOutDirEnv)) {
        const fs::path dir = resolve_out_dir(glob.out_dir);
        fs::create_directories(dir);
        write_manifest(dir, "verify",
                       json{{"suite", ver.suite}, {"K", ver.K}, {"cases", ver.grad_cases}, {"seed", ver.seed},
                            {"passed", ok}},
                       {}, {});
      }
      return ok ? kExitOk : kExitVerifyFailed;
    }
  } catch (const trainer::DivergenceError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace hqnn::cli
