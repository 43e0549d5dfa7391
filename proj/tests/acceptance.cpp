// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [--seeds N] [--only LIST]
//
// The end-to-end benchmark (criterion 6) trains two arms per seed under
// DIR. Finished runs whose config snapshot matches are reused and
// interrupted runs resume from their newest epoch checkpoint.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "checks.hpp"
#include "ssmt/config.hpp"
#include "ssmt/evaluate.hpp"
#include "ssmt/synthdata.hpp"
#include "ssmt/training.hpp"

namespace fs = std::filesystem;
using namespace ssmt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Outcome values_outcome(const std::vector<checks::Value>& values) {
  Outcome o{true, ""};
  double worst = 0.0;
  for (const auto& v : values) {
    worst = std::max(worst, std::abs(v.got - v.want));
    if (!v.ok()) {
      o.pass = false;
      o.detail += " [" + v.name + " got " + fmt17(v.got) + " want " + fmt17(v.want) + "]";
    }
  }
  o.detail = std::to_string(values.size()) + " examples, max |err| " + fmt(worst) + o.detail;
  return o;
}

Outcome criterion1() { return values_outcome(checks::loss_arithmetic()); }

Outcome criterion2() {
  const auto d = checks::gradient_check_discriminator(1);
  const auto g = checks::gradient_check_generator(1);
  Outcome o;
  o.pass = d.params <= 500 && g.params <= 500 && d.rel_error < 1e-4 && g.rel_error < 1e-4;
  o.detail = "L_D rel err " + fmt(d.rel_error) + " (" + std::to_string(d.params) + " params), L_G rel err " +
             fmt(g.rel_error) + " (" + std::to_string(g.params) + " params)";
  return o;
}

Outcome criterion3() {
  const auto r = checks::emd_point_masses(0.0, 3.0, 2000, 1);
  return {std::abs(r.gap - r.target) <= 0.1 * r.target, "mean gap " + fmt(r.gap) + " vs |a-b| " + fmt(r.target)};
}

Outcome criterion4() {
  const auto ridge = checks::ridge_vs_normal_equations(100, 1);
  const auto leaks = checks::nested_cv_leaks(1);
  return {ridge.max_abs_error <= 1e-8 && ridge.systems == 100 && leaks == 0,
          std::to_string(ridge.systems) + " systems, max |err| " + fmt(ridge.max_abs_error) + ", ledger leaks " +
              std::to_string(leaks)};
}

Outcome criterion5() {
  const double spread = checks::weight_mass_spread({64031, 20050, 14639});
  return {spread <= 1e-12, "relative weight-mass spread " + fmt(spread)};
}

Outcome criterion7() {
  const train::TrainingConfig tc;
  const double e0 = train::lr_at(0, tc), e1 = train::lr_at(1, tc), e26 = train::lr_at(26, tc);
  const double want26 = 0.01 * std::pow(0.98, 26) / 5;
  return {e0 == 0.01 && e1 == 0.01 * 0.98 && e26 == want26,
          "lr(0) " + fmt17(e0) + ", lr(1) " + fmt17(e1) + ", lr(26) " + fmt17(e26) + " want " + fmt17(want26)};
}

Outcome criterion8(const fs::path& work) {
  auto cfg = checks::tiny_config();
  cfg.set("train.threads", "1");
  const auto data = checks::tiny_dataset(work / "determinism_data");
  const auto a = work / "determinism_a", b = work / "determinism_b";
  fs::remove_all(a);
  fs::remove_all(b);
  train::train(cfg, data, a);
  train::train(cfg, data, b);
  const auto ma = checks::read_file(a / "metrics.csv"), mb = checks::read_file(b / "metrics.csv");
  const auto lines = std::count(ma.begin(), ma.end(), '\n');
  return {!ma.empty() && ma == mb, std::to_string(lines) + " metrics lines, byte-identical: " + (ma == mb ? "yes" : "no")};
}

Outcome criterion9() {
  const auto r = checks::init_schemes(1);
  return {r.same_init_max_diff == 0.0 && r.mean_dev <= r.mean_bound && r.sd_dev <= r.sd_bound,
          "same-init max diff " + fmt(r.same_init_max_diff) + ", mean dev " + fmt(r.mean_dev) + " <= " +
              fmt(r.mean_bound) + ", sd dev " + fmt(r.sd_dev) + " <= " + fmt(r.sd_bound)};
}

// End-to-end benchmark configuration: 10000 tiles of 32x32x9, 5% primary
// labels, 30 epochs, narrowed networks for a single CPU core.
config::RunConfig e2e_config() {
  config::RunConfig cfg;
  cfg.set("data.tile_size", "32");
  cfg.set("data.tiles", "10000");
  cfg.set("data.labeled_fraction", "0.05");
  cfg.set("disc.widths", "16,32,64,64");
  cfg.set("gen.base_channels", "64");
  cfg.set("train.epochs", "30");
  cfg.set("train.keep_checkpoints", "1");
  cfg.set("train.threads", "1");
  return cfg;
}

std::optional<fs::path> newest_checkpoint(const fs::path& run) {
  std::optional<fs::path> best;
  if (!fs::exists(run / "checkpoints")) return best;
  for (const auto& e : fs::directory_iterator(run / "checkpoints")) {
    if (e.path().extension() == ".ckpt" && (!best || e.path().filename() > best->filename())) best = e.path();
  }
  return best;
}

fs::path train_arm(const config::RunConfig& cfg, const fs::path& data, const fs::path& run) {
  const auto final_ckpt = run / "final.ckpt";
  if (fs::exists(final_ckpt) && fs::exists(run / "config.snapshot") &&
      checks::read_file(run / "config.snapshot") == cfg.snapshot()) {
    std::fprintf(stderr, "reusing %s\n", run.c_str());
    return final_ckpt;
  }
  auto resume = newest_checkpoint(run);
  if (resume && resume->filename() == "epoch_0000.ckpt") resume.reset();
  if (!resume) fs::remove_all(run);
  std::fprintf(stderr, "training %s%s\n", run.c_str(), resume ? (" from " + resume->string()).c_str() : "");
  return train::train(cfg, data, run, resume).final_checkpoint;
}

Outcome criterion6(const fs::path& work, int seeds) {
  torch::set_num_threads(1);
  const auto base = e2e_config();
  const auto data = work / "e2e_data";
  if (!fs::exists(data / "tiles.bin")) synth::write_dataset(synth::generate_dataset(base), data);
  const auto ds = synth::read_dataset(data);

  std::ofstream table(work / "e2e_results.csv");
  table << "seed,semisupervised_r,supervised_r,baseline_r,beats_baseline,beats_control\n";
  int wins = 0;
  std::ostringstream detail;
  for (int s = 1; s <= seeds; ++s) {
    auto semi = base;
    semi.set("train.seed", std::to_string(s));
    auto sup = semi;
    sup.set("train.mode", "supervised");
    const auto semi_run = work / ("semisupervised_s" + std::to_string(s));
    const auto sup_run = work / ("supervised_s" + std::to_string(s));
    const auto rs = eval::evaluate_checkpoint(train_arm(semi, data, semi_run), ds, semi);
    eval::write_report(rs, semi_run / "eval");
    const auto rc = eval::evaluate_checkpoint(train_arm(sup, data, sup_run), ds, sup);
    eval::write_report(rc, sup_run / "eval");
    const bool a = rs.pearson_r >= rs.baseline_r + 0.05;
    const bool b = rs.pearson_r > rc.pearson_r;
    wins += a && b;
    table << s << "," << fmt17(rs.pearson_r) << "," << fmt17(rc.pearson_r) << "," << fmt17(rs.baseline_r) << ","
          << a << "," << b << "\n";
    table.flush();
    detail << " s" << s << ":" << fmt(rs.pearson_r) << "/" << fmt(rc.pearson_r) << "/" << fmt(rs.baseline_r);
  }
  const int needed = seeds == 5 ? 4 : (seeds * 4 + 4) / 5;
  return {wins >= needed, std::to_string(wins) + "/" + std::to_string(seeds) +
                              " seeds meet both conditions (semi/control/baseline r):" + detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = (fs::temp_directory_path() / "ssmt_acceptance").string();
  int seeds = 5;
  std::vector<int> only;
  app.add_option("--work", work, "working directory for training runs");
  app.add_option("--seeds", seeds, "end-to-end seeds")->check(CLI::Range(1, 100));
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, criterion1},
      {2, criterion2},
      {3, criterion3},
      {4, criterion4},
      {5, criterion5},
      {6, [&] { return criterion6(work, seeds); }},
      {7, criterion7},
      {8, [&] { return criterion8(work); }},
      {9, criterion9},
  };
  // Runtime limits in seconds, where one is stated.
  const std::map<int, double> limits = {{1, 1.0}, {2, 60.0}, {3, 30.0}, {4, 30.0}, {6, 8 * 3600.0}};

  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (const auto& [id, run] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limits.count(id) && secs >= limits.at(id)) {
      o.pass = false;
      o.detail += " (over " + fmt(limits.at(id)) + " s limit)";
    }
    failures += !o.pass;
    std::printf("criterion %d: %s  %s  [%.2f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
