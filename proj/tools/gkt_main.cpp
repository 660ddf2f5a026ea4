#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gkt/bench.hpp"
#include "gkt/galerkin.hpp"
#include "gkt/io.hpp"
#include "gkt/model.hpp"
#include "gkt/pde_data.hpp"
#include "gkt/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDatagen = 3;
constexpr int kExitTrainNan = 4;
constexpr int kExitVerifyFail = 5;

std::string toolchain_string() {
  std::ostringstream os;
  os << "gkt 1.0 (" <<
#if defined(__clang__)
      "clang " << __clang_major__ << "." << __clang_minor__
#elif defined(__GNUC__)
      "gcc " << __GNUC__ << "." << __GNUC_MINOR__
#else
      "unknown compiler"
#endif
     << ")";
  return os.str();
}

void write_manifest(const std::string& out_path, const std::string& command,
                    const nlohmann::json& config, std::uint64_t seed,
                    const nlohmann::json& inputs, const nlohmann::json& artifacts) {
  nlohmann::json m = {{"command", command}, {"config", config},      {"seed", seed},
                      {"inputs", inputs},   {"artifacts", artifacts}, {"toolchain", toolchain_string()}};
  gkt::write_text_file(out_path + ".manifest.json", m.dump(2) + "\n");
}

std::vector<std::int64_t> parse_int_list(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) if (!item.empty()) out.push_back(std::stoll(item));
  return out;
}

nlohmann::json verify_report_json(const gkt::VerifyReport& rep) {
  nlohmann::json trials = nlohmann::json::array();
  for (const gkt::VerifyTrial& t : rep.trials) {
    trials.push_back({{"n", t.n},
                      {"d", t.d},
                      {"r", t.r},
                      {"family", t.family},
                      {"permuted", t.permuted},
                      {"reproduce_rel", t.reproduce_rel},
                      {"schur_vs_block", t.schur_vs_block},
                      {"minmax_gap", t.minmax_gap},
                      {"cea_lhs", t.cea_lhs},
                      {"cea_rhs", t.cea_rhs},
                      {"cea_holds", t.cea_holds},
                      {"pass", t.pass}});
  }
  return nlohmann::json{{"trials", std::move(trials)},
                        {"pass_count", rep.pass_count},
                        {"total", rep.trials.size()},
                        {"max_reproduce_rel", rep.max_reproduce_rel},
                        {"max_schur_vs_block", rep.max_schur_vs_block},
                        {"max_minmax_gap", rep.max_minmax_gap},
                        {"all_pass", rep.all_pass}};
}

int cmd_datagen(const std::string& problem, std::int64_t n, std::int64_t count,
                std::int64_t test_count, std::uint64_t seed, const std::string& out,
                std::int64_t fine_n, double dt, std::int64_t nf, std::int64_t nc,
                double noise_eps) {
  gkt::DatasetConfig cfg;
  cfg.problem = gkt::problem_from_string(problem);
  cfg.count_train = count;
  cfg.count_test = test_count;
  cfg.seed = seed;
  cfg.burgers_n = n;
  if (fine_n > 0) cfg.burgers_fine_n = fine_n;
  if (cfg.burgers_fine_n < cfg.burgers_n) cfg.burgers_fine_n = cfg.burgers_n;
  if (dt > 0) cfg.burgers_dt = dt;
  if (nf > 0) cfg.darcy_nf = nf;
  if (nc > 0) cfg.darcy_nc = nc;
  cfg.noise_eps = noise_eps;

  write_manifest(out, "datagen", gkt::to_json(cfg), seed, nlohmann::json::object(),
                 nlohmann::json{{"dataset", out}});
  gkt::Dataset ds;
  try {
    ds = gkt::dataset_build(cfg);
    gkt::write_dataset(out, ds);
  } catch (const std::exception& e) {
    std::cerr << "datagen failed: " << e.what() << "\n";
    return kExitDatagen;
  }

  nlohmann::json summary = {{"problem", gkt::to_string(cfg.problem)},
                            {"count_train", cfg.count_train},
                            {"count_test", cfg.count_test},
                            {"dataset_hash", gkt::content_hash_hex(out)}};
  if (cfg.problem == gkt::Problem::burgers1d) {
    std::int64_t ok = 0, total = 0;
    for (const auto* split : {&ds.train, &ds.test})
      for (const gkt::DataSample& s : *split) {
        ok += gkt::burgers_energy_ok(s) ? 1 : 0;
        ++total;
      }
    summary["energy_law_pass"] = ok;
    summary["energy_law_total"] = total;
    summary["grid_n"] = cfg.burgers_n;
    summary["fine_n"] = cfg.burgers_fine_n;
  } else {
    summary["nf"] = cfg.darcy_nf;
    summary["nc"] = cfg.darcy_nc;
  }
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

gkt::ModelConfig model_config_for(const gkt::Dataset& ds, const std::string& model,
                                  const std::string& ln, std::int64_t d_model,
                                  std::int64_t layers, std::int64_t n_head,
                                  double eta, double delta, std::uint64_t seed) {
  gkt::ModelConfig mc = gkt::ModelConfig::desk_burgers();
  switch (ds.config.problem) {
    case gkt::Problem::burgers1d:
      mc = gkt::ModelConfig::desk_burgers();
      mc.seq_n = ds.config.burgers_n;
      break;
    case gkt::Problem::darcy2d:
      mc = gkt::ModelConfig::paper_darcy();
      mc.n_f = ds.config.darcy_nf;
      break;
    case gkt::Problem::darcy_inverse:
      mc = gkt::ModelConfig::paper_darcy_inverse();
      mc.n_f = ds.config.darcy_nf;
      mc.n_c = ds.config.darcy_nc;
      break;
  }
  mc.problem = ds.config.problem;
  mc.variant = gkt::attn_variant_from_string(model);
  mc.ln_scheme = gkt::ln_scheme_from_string(ln);
  if (d_model > 0) mc.d_model = d_model;
  if (layers > 0) mc.n_layers = layers;
  if (n_head > 0) mc.n_head = n_head;
  mc.init_eta = eta;
  mc.init_delta = delta;
  mc.seed = seed;
  return mc;
}

int cmd_train(const std::string& model, const std::string& ln, const std::string& data,
              std::int64_t epochs, std::uint64_t seed, const std::string& out,
              const std::string& report_path, std::int64_t d_model, std::int64_t layers,
              std::int64_t n_head, double eta, double delta, double lr_max,
              std::int64_t batch) {
  gkt::Dataset ds = gkt::read_dataset(data);
  gkt::ModelConfig mc = model_config_for(ds, model, ln, d_model, layers, n_head, eta,
                                         delta, seed);
  gkt::TrainConfig tc;
  tc.epochs = epochs;
  tc.seed = seed;
  if (lr_max > 0) tc.lr_max = lr_max;
  if (batch > 0) tc.batch_size = batch;

  write_manifest(out, "train",
                 nlohmann::json{{"model", gkt::to_json(mc)}, {"train", gkt::to_json(tc)}},
                 seed, nlohmann::json{{"dataset", data}, {"dataset_hash", gkt::content_hash_hex(data)}},
                 nlohmann::json{{"checkpoint", out}, {"report", report_path}});

  gkt::OperatorModel m(mc);
  gkt::RunReport report = gkt::train(m, ds, tc);
  gkt::write_checkpoint(out, m);
  if (!report_path.empty()) {
    gkt::write_text_file(report_path, gkt::to_json(report, true).dump(2) + "\n");
    gkt::write_text_file(report_path + ".csv", gkt::run_report_csv(report));
  }
  std::cout << gkt::to_json(report, false).dump(2) << "\n";
  return report.aborted_nan ? kExitTrainNan : kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data,
             const std::string& out) {
  gkt::OperatorModel model = gkt::load_checkpoint(checkpoint);
  gkt::Dataset ds = gkt::read_dataset(data);
  const double rel = gkt::evaluate(model, ds.test.empty() ? ds.train : ds.test);
  nlohmann::json j = {{"mean_rel_l2", rel},
                      {"count", ds.test.empty() ? ds.train.size() : ds.test.size()},
                      {"split", ds.test.empty() ? "train" : "test"},
                      {"checkpoint", checkpoint},
                      {"dataset_hash", gkt::content_hash_hex(data)}};
  std::cout << j.dump(2) << "\n";
  if (!out.empty()) gkt::write_text_file(out, j.dump(2) + "\n");
  return kExitOk;
}

int cmd_verify(std::int64_t trials, const std::string& sizes, std::uint64_t seed,
               const std::string& out, bool inject_fault) {
  gkt::VerifyOptions opt;
  opt.trials = trials;
  if (!sizes.empty()) opt.sizes = parse_int_list(sizes);
  opt.seed = seed;
  opt.inject_fault = inject_fault;
  gkt::VerifyReport rep = gkt::run_verification(opt);
  nlohmann::json j = verify_report_json(rep);
  std::cout << j.dump(2) << "\n";
  if (!out.empty()) gkt::write_text_file(out, j.dump(2) + "\n");
  return rep.all_pass ? kExitOk : kExitVerifyFail;
}

int cmd_bench(const std::string& ns, std::int64_t d, const std::string& variants,
              std::int64_t reps, const std::string& out) {
  std::vector<gkt::AttnVariant> vs;
  std::stringstream ss(variants);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) vs.push_back(gkt::attn_variant_from_string(item));
  const std::vector<std::int64_t> nlist = parse_int_list(ns);
  if (vs.empty() || nlist.empty()) throw gkt::ConfigError("bench needs variants and sizes");

  std::vector<gkt::BenchRow> rows = gkt::bench_sweep(vs, nlist, d, reps);
  std::ostringstream csv;
  csv << "variant,n,d,macs,wall_ms,peak_bytes,max_single_alloc\n";
  for (const gkt::BenchRow& r : rows)
    csv << r.variant << "," << r.n << "," << r.d << "," << r.dot_macs_measured << ","
        << r.wall_ms_median << "," << r.peak_bytes << "," << r.max_single_alloc << "\n";
  std::cout << csv.str();
  if (!out.empty()) gkt::write_text_file(out, csv.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"softmax-free attention operator-learning toolkit"};
  app.require_subcommand(1);

  // datagen
  auto* dg = app.add_subcommand("datagen", "generate a benchmark dataset");
  std::string dg_problem = "burgers", dg_out = "dataset.gktd";
  std::int64_t dg_n = 512, dg_count = 256, dg_test = 64, dg_fine = -1, dg_nf = -1, dg_nc = -1;
  std::uint64_t dg_seed = 1127802;
  double dg_dt = -1.0, dg_noise = 0.0;
  dg->add_option("--problem", dg_problem, "burgers | darcy | darcy-inverse");
  dg->add_option("--n", dg_n, "delivered 1D resolution");
  dg->add_option("--count", dg_count, "training samples");
  dg->add_option("--test-count", dg_test, "test samples");
  dg->add_option("--seed", dg_seed);
  dg->add_option("--out", dg_out);
  dg->add_option("--fine-n", dg_fine, "1D generation resolution (paper: 8192)");
  dg->add_option("--dt", dg_dt, "Burgers time step");
  dg->add_option("--nf", dg_nf, "2D fine grid");
  dg->add_option("--nc", dg_nc, "2D coarse grid (inverse target)");
  dg->add_option("--noise", dg_noise, "inverse-problem input noise eps");

  // train
  auto* tr = app.add_subcommand("train", "train an operator learner");
  std::string tr_model = "gt", tr_ln = "new", tr_data, tr_out = "model.gktm",
              tr_report = "report.json";
  std::int64_t tr_epochs = 20, tr_dmodel = -1, tr_layers = -1, tr_nhead = -1, tr_batch = -1;
  std::uint64_t tr_seed = 1127802;
  double tr_eta = 1e-2, tr_delta = 1e-2, tr_lrmax = -1.0;
  tr->add_option("--model", tr_model, "ft | gt | st | lt");
  tr->add_option("--ln", tr_ln, "regular | new");
  tr->add_option("--data", tr_data)->required();
  tr->add_option("--epochs", tr_epochs);
  tr->add_option("--seed", tr_seed);
  tr->add_option("--out", tr_out);
  tr->add_option("--report", tr_report);
  tr->add_option("--d-model", tr_dmodel);
  tr->add_option("--layers", tr_layers);
  tr->add_option("--n-head", tr_nhead);
  tr->add_option("--eta", tr_eta, "projection init gain");
  tr->add_option("--delta", tr_delta, "diagonal init weight");
  tr->add_option("--lr-max", tr_lrmax);
  tr->add_option("--batch", tr_batch);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_out;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--out", ev_out);

  // verify
  auto* vf = app.add_subcommand("verify", "run the projection-theory battery");
  std::int64_t vf_trials = 100;
  std::string vf_sizes, vf_out;
  std::uint64_t vf_seed = 1127802;
  bool vf_fault = false;
  vf->add_option("--trials", vf_trials);
  vf->add_option("--sizes", vf_sizes, "comma-separated sequence lengths");
  vf->add_option("--seed", vf_seed);
  vf->add_option("--out", vf_out);
  vf->add_flag("--inject-fault", vf_fault, "perturb the projection (negative control)");

  // bench
  auto* bn = app.add_subcommand("bench", "attention scaling benchmark");
  std::string bn_ns = "4096,8192", bn_variants = "fourier,galerkin", bn_out;
  std::int64_t bn_d = 64, bn_reps = 5;
  bn->add_option("--ns", bn_ns, "comma-separated sequence lengths");
  bn->add_option("--d", bn_d);
  bn->add_option("--variants", bn_variants);
  bn->add_option("--reps", bn_reps);
  bn->add_option("--out", bn_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (dg->parsed())
      return cmd_datagen(dg_problem, dg_n, dg_count, dg_test, dg_seed, dg_out, dg_fine,
                         dg_dt, dg_nf, dg_nc, dg_noise);
    if (tr->parsed())
      return cmd_train(tr_model, tr_ln, tr_data, tr_epochs, tr_seed, tr_out, tr_report,
                       tr_dmodel, tr_layers, tr_nhead, tr_eta, tr_delta, tr_lrmax,
                       tr_batch);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_out);
    if (vf->parsed()) return cmd_verify(vf_trials, vf_sizes, vf_seed, vf_out, vf_fault);
    if (bn->parsed()) return cmd_bench(bn_ns, bn_d, bn_variants, bn_reps, bn_out);
  } catch (const gkt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const gkt::DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}
