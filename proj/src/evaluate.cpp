#include "ssmt/evaluate.hpp"

#include "ssmt/container.hpp"
#include "ssmt/error.hpp"
#include "ssmt/models.hpp"

namespace ssmt::eval {

NestedCvOptions cv_options(const config::RunConfig& cfg) {
  NestedCvOptions o;
  o.outer_folds = static_cast<int>(cfg.get_int("eval.outer_folds"));
  o.inner_folds = static_cast<int>(cfg.get_int("eval.inner_folds"));
  o.seed = static_cast<std::uint64_t>(cfg.get_int("eval.seed"));
  o.ridge.standardize = cfg.get_bool("eval.standardize");
  return o;
}

std::vector<std::size_t> evaluation_rows(const synth::Dataset& dataset, const config::RunConfig& cfg) {
  std::vector<synth::Split> splits;
  for (const auto& s : cfg.get_strings("eval.splits")) splits.push_back(synth::parse_split(s));
  const auto& primary = dataset.info.primary_task;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const auto& e = dataset.examples[i];
    if (std::find(splits.begin(), splits.end(), e.split) == splits.end()) continue;
    const auto it = e.continuous.find(primary);
    if (it != e.continuous.end() && it->second) rows.push_back(i);
  }
  if (rows.empty()) throw Error(Errc::MissingLabels, "no evaluation rows carry a continuous " + primary + " value");
  return rows;
}

RegressionReport evaluate_features(const Matrix& features, const synth::Dataset& dataset,
                                   const std::vector<std::size_t>& rows, const config::RunConfig& cfg,
                                   RowUsageLedger* ledger) {
  if (static_cast<std::size_t>(features.rows()) != rows.size()) {
    throw Error(Errc::ShapeMismatch, "one feature row per evaluation row expected");
  }
  const auto& primary = dataset.info.primary_task;
  const auto& baseline = dataset.info.baseline_task;
  Vector y(static_cast<Eigen::Index>(rows.size()));
  Vector base(static_cast<Eigen::Index>(rows.size()));
  bool has_baseline = !baseline.empty();
  std::vector<std::int64_t> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& e = dataset.examples[rows[i]];
    y(static_cast<Eigen::Index>(i)) = *e.continuous.at(primary);
    ids.push_back(e.id);
    if (has_baseline) {
      const auto it = e.continuous.find(baseline);
      if (it == e.continuous.end() || !it->second) {
        has_baseline = false;
      } else {
        base(static_cast<Eigen::Index>(i)) = *it->second;
      }
    }
  }
  const auto grid = cfg.get_reals("eval.penalty_grid");
  auto report = nested_cv(features, y, grid, cv_options(cfg), ledger);
  report.ids = std::move(ids);
  report.baseline_r = has_baseline ? pearson(base, y) : std::numeric_limits<double>::quiet_NaN();
  return report;
}

RegressionReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const synth::Dataset& dataset,
                                     const config::RunConfig& cfg, RowUsageLedger* ledger) {
  if (!std::filesystem::exists(checkpoint)) throw Error(Errc::Io, "checkpoint '" + checkpoint.string() + "' not found");
  auto models = nn::restore_models(io::read_container(checkpoint));
  const auto rows = evaluation_rows(dataset, cfg);
  const auto& info = dataset.info;
  if (models.discriminator->spec().in_channels != info.bands) {
    throw Error(Errc::ShapeMismatch, "checkpoint expects " + std::to_string(models.discriminator->spec().in_channels) +
                                         " bands, dataset has " + std::to_string(info.bands));
  }
  const auto per_tile = static_cast<std::int64_t>(dataset.tile_floats());
  auto images = torch::empty({static_cast<std::int64_t>(rows.size()), info.tile_size, info.tile_size, info.bands},
                             torch::kFloat32);
  auto* dst = images.data_ptr<float>();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = dataset.tile(rows[i]);
    std::copy(src.begin(), src.end(), dst + static_cast<std::int64_t>(i) * per_tile);
  }
  const auto feats = nn::extract_features(models.discriminator, nn::to_nchw(images)).to(torch::kFloat64).contiguous();
  const Matrix x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      feats.data_ptr<double>(), feats.size(0), feats.size(1));
  return evaluate_features(x, dataset, rows, cfg, ledger);
}

RegressionReport evaluate_oracle(const synth::Dataset& dataset, const config::RunConfig& cfg) {
  const auto data_cfg = config::RunConfig::from_snapshot(dataset.info.config_snapshot);
  const auto world = synth::generate_world(dataset.info.grid_size, dataset.info.seed,
                                           static_cast<int>(data_cfg.get_int("data.survey_sites")));
  const auto rows = evaluation_rows(dataset, cfg);
  Matrix x(static_cast<Eigen::Index>(rows.size()), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = world.development(dataset.examples[rows[i]].location);
  }
  return evaluate_features(x, dataset, rows, cfg);
}

}  // namespace ssmt::eval
