// Command-line front end: train / eval-bmi / eval-se / eval-ber /
// export-constellation, each driven by a key=value config file plus
// --set overrides. Exit codes: 0 ok, 2 config error, 3 missing checkpoint,
// 4 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "shapecm/config.hpp"
#include "shapecm/eval.hpp"
#include "shapecm/fec/ldpc.hpp"
#include "shapecm/models.hpp"
#include "shapecm/training.hpp"

namespace fs = std::filesystem;
using namespace shapecm;

namespace {

struct CheckpointMissing : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

KeyValueConfig load_config(const CommonArgs& args) {
  KeyValueConfig cfg = KeyValueConfig::from_file(args.config_path);
  for (const std::string& o : args.overrides) cfg.set_override(o);
  return cfg;
}

ChannelRealization::Kind channel_from(const KeyValueConfig& cfg) {
  const std::string c = cfg.get_str("channel", "awgn");
  if (c == "awgn") return ChannelRealization::Kind::Awgn;
  if (c == "rbf") return ChannelRealization::Kind::Rbf;
  throw std::invalid_argument("config: channel must be awgn or rbf, got '" +
                              c + "'");
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return "";
  std::stringstream ss;
  ss << f.rdbuf();
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

void write_manifest(const std::string& path, const std::string& verb,
                    const KeyValueConfig& cfg,
                    const std::vector<std::string>& outputs,
                    const nlohmann::json& extra = {}) {
  nlohmann::json j;
  j["tool"] = "shapecm";
  j["verb"] = verb;
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(cfg.canonical_string())));
  j["config_hash"] = buf;
  j["seed"] = cfg.get_int("seed", 1);
  const std::string ckpt = cfg.get_str("checkpoint", "");
  j["checkpoint"] = ckpt;
  j["checkpoint_hash"] = ckpt.empty() ? "" : file_hash_hex(ckpt);
  j["outputs"] = outputs;
  if (!extra.is_null()) j["details"] = extra;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("manifest: cannot write " + path);
  f << j.dump(2) << "\n";
}

std::string out_base(const KeyValueConfig& cfg, const std::string& dflt_name) {
  const std::string dir = cfg.get_str("out_dir", "runs");
  fs::create_directories(dir);
  const std::string name = cfg.get_str("run_name", dflt_name);
  return dir + "/" + name;
}

std::string default_run_name(const KeyValueConfig& cfg,
                             const std::string& verb) {
  std::string scheme = cfg.get_str("scheme", "scheme");
  for (char& c : scheme)
    if (c == '/') c = '-';
  return scheme + "_" + cfg.get_str("channel", "awgn") + "_" + verb;
}

ExperimentConfig experiment_from(const KeyValueConfig& cfg) {
  ExperimentConfig ec;
  ec.scheme = scheme_from_name(cfg.get_str("scheme"));
  ec.channel = channel_from(cfg);
  ec.snr_grid_db = cfg.get_grid("snr_grid");
  ec.samples = cfg.get_int("samples", 100000);
  ec.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  ec.ber_min_errors = static_cast<int>(cfg.get_int("ber_min_errors", 100));
  ec.ber_min_codewords = cfg.get_int("ber_min_codewords", 10);
  ec.ber_max_codewords = cfg.get_int("ber_max_codewords", 1000);
  ec.fade_block = static_cast<int>(cfg.get_int("fade_block", 1));
  ec.threads = static_cast<int>(cfg.get_int("threads", 0));
  ec.ldpc_file = cfg.get_str("ldpc_file", "");
  return ec;
}

/// Loads the transmitter (and demapper, when required) for an evaluation.
/// Static AWGN schemes need no checkpoint; everything else does.
std::pair<TxModel, std::optional<DemapperModel>> models_for_eval(
    const KeyValueConfig& cfg, const ExperimentConfig& ec) {
  const ResolvedScheme rs = resolve_scheme(ec.scheme);
  const bool needs_demapper = ec.channel == ChannelRealization::Kind::Rbf;
  const bool trained_tx = rs.kind != TxKind::UniformQam;
  const std::string ckpt_path = cfg.get_str("checkpoint", "");
  if (!trained_tx && !needs_demapper) {
    TxModel model;
    model.kind = TxKind::UniformQam;
    model.m = rs.m;
    model.k = rs.k_shape;
    return {model, std::nullopt};
  }
  if (ckpt_path.empty())
    throw CheckpointMissing("scheme '" + scheme_name(ec.scheme) +
                            "' needs a trained checkpoint (set `checkpoint`)");
  if (!fs::exists(ckpt_path))
    throw CheckpointMissing("checkpoint not found: " + ckpt_path);
  Checkpoint ck = load_checkpoint(ckpt_path);
  if (ck.tx.kind != rs.kind)
    throw std::invalid_argument("checkpoint kind '" +
                                tx_kind_name(ck.tx.kind) +
                                "' does not match scheme '" +
                                scheme_name(ec.scheme) + "'");
  if (needs_demapper && !ck.demapper.has_value())
    throw CheckpointMissing("checkpoint has no NN demapper, required for RBF");
  return {ck.tx, ck.demapper};
}

int cmd_train(const CommonArgs& args) {
  const KeyValueConfig cfg = load_config(args);
  const Scheme scheme = scheme_from_name(cfg.get_str("scheme"));
  const ResolvedScheme rs = resolve_scheme(scheme);

  TrainConfig tc;
  tc.model_kind = rs.kind;
  tc.m = rs.m;
  tc.k = rs.kind == TxKind::Gs ? rs.m : rs.k_shape;
  tc.channel = channel_from(cfg);
  const bool rbf = tc.channel == ChannelRealization::Kind::Rbf;
  tc.snr_lo_db = cfg.get_num("snr_lo", rbf ? 5.0 : 0.0);
  tc.snr_hi_db = cfg.get_num("snr_hi", rbf ? 25.0 : 20.0);
  tc.batch_size = static_cast<int>(cfg.get_int("batch_size", 1000));
  tc.learning_rate = cfg.get_num("learning_rate", 1e-3);
  tc.iterations = static_cast<int>(cfg.get_int("iterations", 10000));
  tc.patience = static_cast<int>(cfg.get_int("patience", 1000));
  tc.seeds = cfg.get_seed_list("seeds", {1, 2, 3, 4, 5});
  tc.master_seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  const std::string dm = cfg.get_str("demapper", "auto");
  if (dm == "auto")
    tc.demapper = rbf ? DemapperKind::Nn : DemapperKind::Exact;
  else if (dm == "exact")
    tc.demapper = DemapperKind::Exact;
  else if (dm == "nn")
    tc.demapper = DemapperKind::Nn;
  else
    throw std::invalid_argument("config: demapper must be auto|exact|nn");
  tc.demapper_hidden = static_cast<int>(cfg.get_int("demapper_hidden", 128));
  tc.tx_hidden = static_cast<int>(cfg.get_int("tx_hidden", 64));
  tc.val_points = static_cast<int>(cfg.get_int("val_points", 21));
  tc.val_realizations =
      static_cast<int>(cfg.get_int("val_realizations", 10000));
  tc.val_period = static_cast<int>(cfg.get_int("val_period", 500));
  tc.val_realizations_periodic =
      static_cast<int>(cfg.get_int("val_realizations_periodic", 200));
  tc.threads = static_cast<int>(cfg.get_int("threads", 0));

  const std::string base = out_base(cfg, default_run_name(cfg, "train"));
  const TrainResult result = train(tc);

  std::vector<std::string> outputs;
  for (const TrainHistory& h : result.per_seed) {
    const std::string hp =
        base + "_seed" + std::to_string(h.seed) + "_history.csv";
    save_history_csv(hp, h);
    outputs.push_back(hp);
    std::cout << "seed " << h.seed
              << (h.failed ? ": diverged"
                           : ": val loss " + std::to_string(h.final_val_loss))
              << "\n";
  }
  if (result.best_index < 0)
    throw NumericalFailure("train: every seed diverged");

  Checkpoint ck;
  ck.tx = result.best_tx;
  ck.demapper = result.best_demapper;
  ck.channel = rbf ? "rbf" : "awgn";
  ck.snr_lo = tc.snr_lo_db;
  ck.snr_hi = tc.snr_hi_db;
  const std::string ckpt_path = base + ".ckpt";
  save_checkpoint(ckpt_path, ck);
  outputs.push_back(ckpt_path);

  if (rs.kind == TxKind::MbQam) {
    // Diagnostic only: learned shaping strength across the SNR range.
    const std::string mu_path = base + "_mu.csv";
    std::ofstream f(mu_path);
    f << "es_n0_db,mu\n";
    for (int i = 0; i < 21; ++i) {
      const double snr =
          tc.snr_lo_db + (tc.snr_hi_db - tc.snr_lo_db) * i / 20.0;
      double mu = 0.0;
      mbqam_forward(result.best_tx, snr, &mu);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.10g,%.10g\n", snr, mu);
      f << buf;
    }
    outputs.push_back(mu_path);
  }

  nlohmann::json extra;
  extra["best_seed"] = result.per_seed[result.best_index].seed;
  extra["best_val_loss"] = result.per_seed[result.best_index].final_val_loss;
  write_manifest(base + "_manifest.json", "train", cfg, outputs, extra);
  std::cout << "best seed " << result.per_seed[result.best_index].seed
            << " -> " << ckpt_path << "\n";
  return 0;
}

int cmd_eval_bmi(const CommonArgs& args) {
  const KeyValueConfig cfg = load_config(args);
  const ExperimentConfig ec = experiment_from(cfg);
  const auto [model, demapper] = models_for_eval(cfg, ec);
  const std::vector<PointEstimate> bmi = estimate_bmi(ec, model, demapper);
  for (const PointEstimate& p : bmi)
    if (!std::isfinite(p.value))
      throw NumericalFailure("eval-bmi: non-finite estimate at " +
                             std::to_string(p.snr_db) + " dB");
  const std::string base = out_base(cfg, default_run_name(cfg, "bmi"));
  const std::string csv = base + ".csv";
  write_points_csv(csv, bmi);
  std::vector<std::string> outputs{csv};
  if (ec.channel == ChannelRealization::Kind::Awgn &&
      cfg.get_bool("with_capacity", true)) {
    const std::string cap_csv = base + "_capacity.csv";
    write_points_csv(cap_csv, capacity_curve(ec.snr_grid_db));
    outputs.push_back(cap_csv);
  }
  write_manifest(base + "_manifest.json", "eval-bmi", cfg, outputs);
  std::cout << "wrote " << csv << "\n";
  return 0;
}

int cmd_eval_se(const CommonArgs& args) {
  const KeyValueConfig cfg = load_config(args);
  const ExperimentConfig ec = experiment_from(cfg);
  const auto [model, demapper] = models_for_eval(cfg, ec);
  (void)demapper;  // SE depends on the transmitter only
  const std::string base = out_base(cfg, default_run_name(cfg, "se"));
  const std::string csv = base + ".csv";
  write_points_csv(csv, spectral_efficiency_curve(ec, model));
  write_manifest(base + "_manifest.json", "eval-se", cfg, {csv});
  std::cout << "wrote " << csv << "\n";
  return 0;
}

int cmd_eval_ber(const CommonArgs& args) {
  const KeyValueConfig cfg = load_config(args);
  ExperimentConfig ec = experiment_from(cfg);
  const ResolvedScheme rs = resolve_scheme(ec.scheme);
  if (ec.ldpc_file.empty())
    ec.ldpc_file = rs.rate == 0.5 ? "data/wifi_ldpc_n1944_r12_z81.txt"
                                  : "data/wifi_ldpc_n1944_r23_z81.txt";
  if (!fs::exists(ec.ldpc_file))
    throw std::invalid_argument("eval-ber: LDPC base matrix not found: " +
                                ec.ldpc_file);
  const fec::LdpcCode code = fec::LdpcCode::from_file(ec.ldpc_file, 81);
  const auto [model, demapper] = models_for_eval(cfg, ec);
  const std::vector<BerPoint> ber = run_ber(ec, model, demapper, code);
  const std::string base = out_base(cfg, default_run_name(cfg, "ber"));
  const std::string csv = base + ".csv";
  write_ber_csv(csv, ber);
  nlohmann::json extra = nlohmann::json::array();
  for (const BerPoint& p : ber)
    extra.push_back({{"snr_db", p.snr_db},
                     {"codewords", p.codewords},
                     {"bits", p.bits},
                     {"errors", p.errors}});
  write_manifest(base + "_manifest.json", "eval-ber", cfg, {csv}, extra);
  std::cout << "wrote " << csv << "\n";
  return 0;
}

int cmd_export_constellation(const CommonArgs& args) {
  const KeyValueConfig cfg = load_config(args);
  KeyValueConfig grid_cfg = cfg;  // single-point grid for model loading
  if (!grid_cfg.has("snr_grid"))
    grid_cfg.set("snr_grid", cfg.get_str("snr", "11"));
  const ExperimentConfig ec = experiment_from(grid_cfg);
  const auto [model, demapper] = models_for_eval(grid_cfg, ec);
  (void)demapper;
  const double snr_db = cfg.get_num("snr", ec.snr_grid_db.front());
  const TxForward fwd = tx_forward(model, snr_db);
  const std::string base =
      out_base(cfg, default_run_name(cfg, "constellation"));
  const std::string csv = base + ".csv";
  std::ofstream f(csv);
  if (!f) throw std::runtime_error("cannot write " + csv);
  export_constellation_csv(f, fwd.constellation);
  write_manifest(base + "_manifest.json", "export-constellation", cfg, {csv});
  std::cout << "wrote " << csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trainable coded-modulation experiments"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "key = value config file")
        ->required();
    sub->add_option("--set", args.overrides,
                    "override config entries (key=value, repeatable)");
  };
  CLI::App* train_cmd = app.add_subcommand("train", "train a transmitter");
  CLI::App* bmi_cmd = app.add_subcommand("eval-bmi", "Monte Carlo BMI curve");
  CLI::App* se_cmd = app.add_subcommand("eval-se", "spectral efficiency");
  CLI::App* ber_cmd = app.add_subcommand("eval-ber", "coded BER chain");
  CLI::App* exp_cmd =
      app.add_subcommand("export-constellation", "constellation CSV");
  for (CLI::App* sub : {train_cmd, bmi_cmd, se_cmd, ber_cmd, exp_cmd})
    add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(args);
    if (bmi_cmd->parsed()) return cmd_eval_bmi(args);
    if (se_cmd->parsed()) return cmd_eval_se(args);
    if (ber_cmd->parsed()) return cmd_eval_ber(args);
    if (exp_cmd->parsed()) return cmd_export_constellation(args);
  } catch (const CheckpointMissing& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
