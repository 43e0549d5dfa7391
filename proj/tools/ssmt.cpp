// ssmt: dataset generation, training, evaluation and plots.
//
// Exit codes: 0 ok, 2 usage, 3 data, 4 training, 5 evaluation.

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "ssmt/config.hpp"
#include "ssmt/error.hpp"
#include "ssmt/evaluate.hpp"
#include "ssmt/plots.hpp"
#include "ssmt/synthdata.hpp"
#include "ssmt/tasks.hpp"
#include "ssmt/training.hpp"

namespace {

using namespace ssmt;

constexpr int kUsage = 2;
constexpr int kData = 3;
constexpr int kTraining = 4;
constexpr int kEvaluation = 5;

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "key = value config file");
  cmd->add_option("--set", c.overrides, "override a config key (key=value); repeatable");
}

config::RunConfig load_config(const Common& c, const std::map<std::string, std::string>& flags) {
  config::RunConfig cfg;
  if (!c.config_file.empty()) cfg.merge_file(c.config_file);
  for (const auto& [key, value] : flags) cfg.set(key, value);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(Errc::BadConfigValue, "--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  return cfg;
}

bool is_usage(const Error& e) {
  return e.code() == Errc::UnknownConfigKey || e.code() == Errc::BadConfigValue;
}

int fail(const Error& e, int code) {
  std::cerr << "ssmt: " << e.what() << "\n";
  return is_usage(e) ? kUsage : code;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p, std::vector<std::string>& header) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::Io, "cannot read '" + p.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::string f;
    std::istringstream ls(line);
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (first) {
      header = fields;
      first = false;
    } else if (!fields.empty()) {
      rows.push_back(std::move(fields));
    }
  }
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(Errc::CorruptHeader, "missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

void write_weights(const synth::Dataset& ds, const std::filesystem::path& path) {
  std::map<std::string, std::vector<std::int64_t>> counts;
  for (const auto& t : ds.tasks) {
    auto& c = counts[t.name];
    c.assign(static_cast<std::size_t>(t.num_classes()), 0);
    for (const auto& e : ds.examples) {
      if (e.split != synth::Split::Train) continue;
      if (const auto& label = e.labels.at(t.name)) ++c[static_cast<std::size_t>(*label)];
    }
  }
  const auto table = tasks::compute_weights(ds.tasks, counts);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write '" + path.string() + "'");
  out << "task,class,weight\n";
  for (const auto& t : ds.tasks) {
    for (int k = 0; k < t.num_classes(); ++k) out << t.name << "," << k << "," << config::format_real(table.weight(t.name, k)) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised multitask WGAN-GP on synthetic multispectral tiles"};
  app.require_subcommand(1);
  app.footer(config::help_text());

  // gen-data
  Common gen_common;
  std::map<std::string, std::string> gen_flags;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
  add_common(gen, gen_common);
  const std::vector<std::pair<std::string, std::string>> gen_keys = {
      {"--grid-size", "data.grid_size"}, {"--tiles", "data.tiles"},
      {"--tile-size", "data.tile_size"}, {"--bands", "data.bands"},
      {"--sampling", "data.sampling"},   {"--labeled-fraction", "data.labeled_fraction"},
      {"--seed", "data.seed"},           {"--min-separation", "data.min_separation"}};
  std::map<std::string, std::string> gen_values;
  for (const auto& [flag, key] : gen_keys) gen->add_option(flag, gen_values[key], key);
  gen->add_option("--out", gen_out, "output directory")->required();
  bool gen_dump_weights = false;
  gen->add_flag("--dump-weights", gen_dump_weights, "also write weights.csv (task,class,weight) from train-split counts");

  // train
  Common train_common;
  std::string train_data, train_out, train_resume, train_init, train_filters, train_epochs;
  auto* tr = app.add_subcommand("train", "train generator and discriminator");
  add_common(tr, train_common);
  tr->add_option("--data", train_data, "dataset directory")->required();
  tr->add_option("--out", train_out, "run directory")->required();
  tr->add_option("--resume", train_resume, "checkpoint to resume from");
  tr->add_option("--epochs", train_epochs, "train.epochs");
  tr->add_option("--init", train_init, "init.scheme: none | same-init | random-init");
  tr->add_option("--filters", train_filters, "init.filters: 3-channel filter bank container");

  // evaluate
  Common eval_common;
  std::string eval_checkpoint, eval_data, eval_out, eval_folds;
  bool eval_oracle = false;
  auto* ev = app.add_subcommand("evaluate", "nested cross-validated ridge on discriminator features");
  add_common(ev, eval_common);
  ev->add_option("--checkpoint", eval_checkpoint, "checkpoint file");
  ev->add_flag("--oracle", eval_oracle, "use the true development layer as features");
  ev->add_option("--data", eval_data, "dataset directory")->required();
  ev->add_option("--folds", eval_folds, "eval.outer_folds (>= 2)");
  ev->add_option("--out", eval_out, "report directory")->required();

  // plot
  std::string plot_metrics, plot_predictions, plot_dataset, plot_task, plot_out;
  auto* pl = app.add_subcommand("plot", "render histogram, loss-curve and scatter images");
  pl->add_option("--metrics", plot_metrics, "metrics.csv from a training run");
  pl->add_option("--predictions", plot_predictions, "predictions.csv from evaluate");
  pl->add_option("--dataset", plot_dataset, "dataset directory (class histogram)");
  pl->add_option("--task", plot_task, "task for the histogram (default: the dataset's primary task)");
  pl->add_option("--out", plot_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  if (gen->parsed()) {
    try {
      std::map<std::string, std::string> flags;
      for (const auto& [key, value] : gen_values) {
        if (!value.empty()) flags[key] = value;
      }
      const auto cfg = load_config(gen_common, flags);
      const auto ds = synth::generate_dataset(cfg);
      synth::write_dataset(ds, gen_out);
      if (gen_dump_weights) write_weights(ds, std::filesystem::path(gen_out) / "weights.csv");
      std::cerr << "wrote " << ds.examples.size() << " tiles to " << gen_out << " (hash "
                << synth::dataset_hash(gen_out) << ")\n";
      return 0;
    } catch (const Error& e) {
      return fail(e, kData);
    }
  }

  if (tr->parsed()) {
    try {
      std::map<std::string, std::string> flags;
      if (!train_epochs.empty()) flags["train.epochs"] = train_epochs;
      if (!train_init.empty()) flags["init.scheme"] = train_init;
      if (!train_filters.empty()) flags["init.filters"] = train_filters;
      const auto cfg = load_config(train_common, flags);
      torch::set_num_threads(static_cast<int>(cfg.get_int("train.threads")));
      const auto result = train::train(cfg, train_data, train_out,
                                       train_resume.empty() ? std::nullopt
                                                            : std::optional<std::filesystem::path>(train_resume));
      std::cerr << "trained " << result.rows.size() << " epochs; final checkpoint " << result.final_checkpoint.string()
                << "\n";
      return 0;
    } catch (const Error& e) {
      if (e.code() == Errc::Io || e.code() == Errc::CorruptHeader || e.code() == Errc::VersionMismatch) {
        return fail(e, kData);
      }
      return fail(e, kTraining);
    }
  }

  if (ev->parsed()) {
    try {
      std::map<std::string, std::string> flags;
      if (!eval_folds.empty()) flags["eval.outer_folds"] = eval_folds;
      const auto cfg = load_config(eval_common, flags);
      if (cfg.get_int("eval.outer_folds") < 2) throw Error(Errc::BadConfigValue, "--folds must be >= 2");
      if (eval_oracle == !eval_checkpoint.empty()) {
        throw Error(Errc::BadConfigValue, "give exactly one of --checkpoint or --oracle");
      }
      torch::set_num_threads(static_cast<int>(cfg.get_int("train.threads")));
      const auto ds = synth::read_dataset(eval_data);
      const auto report = eval_oracle ? eval::evaluate_oracle(ds, cfg) : eval::evaluate_checkpoint(eval_checkpoint, ds, cfg);
      eval::write_report(report, eval_out);
      std::ofstream(std::filesystem::path(eval_out) / "config.snapshot") << cfg.snapshot();
      std::cerr << "pearson_r " << config::format_real(report.pearson_r) << " baseline_r "
                << config::format_real(report.baseline_r) << "\n";
      return 0;
    } catch (const Error& e) {
      return fail(e, kEvaluation);
    }
  }

  if (pl->parsed()) {
    if (plot_metrics.empty() && plot_predictions.empty() && plot_dataset.empty()) {
      std::cerr << "ssmt: plot needs --metrics, --predictions or --dataset\n";
      return kUsage;
    }
    for (const auto& p : {plot_metrics, plot_predictions, plot_dataset}) {
      if (!p.empty() && !std::filesystem::exists(p)) {
        std::cerr << "ssmt: input '" << p << "' does not exist\n";
        return kUsage;
      }
    }
    try {
      std::filesystem::create_directories(plot_out);
      const std::filesystem::path out(plot_out);
      if (!plot_metrics.empty()) {
        std::vector<std::string> header;
        const auto rows = read_csv(plot_metrics, header);
        const auto ce = column(header, "epoch"), cd = column(header, "ld_total"), cg = column(header, "lg_total");
        plot::Series ld{"LD", {}}, lg{"LG", {}};
        std::string last_epoch;
        for (const auto& r : rows) {
          if (r.at(ce) == last_epoch) continue;
          last_epoch = r.at(ce);
          ld.values.push_back(std::stod(r.at(cd)));
          lg.values.push_back(std::stod(r.at(cg)));
        }
        const std::vector<plot::Series> series{ld, lg};
        const auto s = plot::loss_curves(series, out / "loss_curves.png");
        std::cerr << "loss curves: " << s.elements << " epochs\n";
      }
      if (!plot_predictions.empty()) {
        std::vector<std::string> header;
        const auto rows = read_csv(plot_predictions, header);
        const auto ct = column(header, "y_true"), cp = column(header, "y_pred");
        std::vector<double> t, p;
        for (const auto& r : rows) {
          t.push_back(std::stod(r.at(ct)));
          p.push_back(std::stod(r.at(cp)));
        }
        const auto s = plot::scatter(t, p, out / "scatter.png");
        std::cerr << "scatter: " << s.elements << " points\n";
      }
      if (!plot_dataset.empty()) {
        const auto ds = synth::read_dataset(plot_dataset);
        const auto task = plot_task.empty() ? ds.info.primary_task : plot_task;
        const auto& spec = ds.task(task);
        std::vector<std::int64_t> counts(static_cast<std::size_t>(spec.num_classes()), 0);
        for (const auto& e : ds.examples) {
          if (e.split != synth::Split::Train) continue;
          if (const auto& label = e.labels.at(task)) ++counts[static_cast<std::size_t>(*label)];
        }
        const auto s = plot::histogram(counts, out / ("histogram_" + task + ".png"));
        std::cerr << "histogram: " << s.elements << " bins\n";
      }
      return 0;
    } catch (const Error& e) {
      std::cerr << "ssmt: " << e.what() << "\n";
      return kUsage;
    } catch (const std::exception& e) {
      std::cerr << "ssmt: " << e.what() << "\n";
      return kUsage;
    }
  }
  return kUsage;
}
