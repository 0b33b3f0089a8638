#include "teashift/experiment.hpp"

#include "teashift/dataset_io.hpp"
#include "teashift/normalize.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace teashift {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(where.empty() ? it.key() : where + "." + it.key(), "unknown field");
  }
}

template <class T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      it->get_to(out);
    } catch (const json::exception& e) {
      throw ConfigError(where.empty() ? key : where + "." + key, e.what());
    }
  }
}

Band parse_band(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError(field, "expected [low_hz, high_hz]");
  }
  Band b{j[0].get<double>(), j[1].get<double>()};
  if (!(b.low_hz >= 0.0 && b.low_hz < b.high_hz)) throw ConfigError(field, "need 0 <= low < high");
  return b;
}

std::string stage_label(std::optional<SleepStage> s) { return s ? std::string(to_string(*s)) : "all"; }

// ---------------------------------------------------------------------------
// Feature blocks: one dataset's rows with the per-row bookkeeping the
// pipeline needs.

struct Block {
  Eigen::MatrixXd x;
  std::vector<std::string> names;
  std::vector<int> labels;
  std::vector<double> ages;
  std::vector<std::string> subject;      // qualified id per row
  std::vector<std::size_t> subject_idx;  // grouping for alignment
  std::vector<bool> control;
};

Block make_block(const Dataset& dataset, const ExperimentConfig& config, bool qualify) {
  FeatureTable table = extract_dataset_features(dataset, config.features);
  if (config.normalize.logit) apply_log_transforms(table.features);
  Block b;
  b.x = std::move(table.features.values);
  b.names = std::move(table.features.names);
  for (std::size_t r = 0; r < table.subject_of_row.size(); ++r) {
    const std::size_t s = table.subject_of_row[r];
    b.labels.push_back(static_cast<int>(table.subject_groups[s]));
    b.ages.push_back(table.subject_ages[s]);
    b.subject.push_back(qualify ? dataset.name + "/" + table.subject_ids[s] : table.subject_ids[s]);
    b.subject_idx.push_back(s);
    b.control.push_back(table.subject_groups[s] == Group::Control);
  }
  return b;
}

std::vector<Eigen::Index> rows_where(const Block& b, const auto& pred) {
  std::vector<Eigen::Index> idx;
  for (std::size_t r = 0; r < b.subject.size(); ++r) {
    if (pred(r)) idx.push_back(static_cast<Eigen::Index>(r));
  }
  return idx;
}

// Training slice of a block.
struct Slice {
  const Block* block;
  std::vector<Eigen::Index> rows;
};

// Fitted normalization chain: logit is stateless and already applied, then
// age regression, z-score and optional RFE column selection.
struct Normalizer {
  std::optional<AgeModel> age;
  std::optional<Standardizer> z;
  std::vector<Eigen::Index> columns;  // into the standardized space
};

Eigen::MatrixXd stack(const std::vector<Slice>& slices, bool ages_only = false) {
  Eigen::Index n = 0, d = 0;
  for (const auto& s : slices) {
    n += static_cast<Eigen::Index>(s.rows.size());
    d = s.block->x.cols();
  }
  Eigen::MatrixXd out(n, ages_only ? 1 : d);
  Eigen::Index at = 0;
  for (const auto& s : slices) {
    for (auto r : s.rows) {
      if (ages_only) {
        out(at++, 0) = s.block->ages[static_cast<std::size_t>(r)];
      } else {
        out.row(at++) = s.block->x.row(r);
      }
    }
  }
  return out;
}

std::vector<int> stack_labels(const std::vector<Slice>& slices) {
  std::vector<int> y;
  for (const auto& s : slices) {
    for (auto r : s.rows) y.push_back(s.block->labels[static_cast<std::size_t>(r)]);
  }
  return y;
}

Eigen::MatrixXd age_correct(const Block& b, const Normalizer& n) {
  Eigen::MatrixXd x = b.x;
  if (n.age) apply_age_regression(x, b.ages, *n.age);
  return x;
}

Normalizer fit_normalizer(const std::vector<Slice>& train, const ExperimentConfig& config) {
  Normalizer n;
  const auto& cfg = config.normalize;
  if (cfg.age_regression) {
    std::vector<Slice> controls;
    for (const auto& s : train) {
      Slice c{s.block, {}};
      for (auto r : s.rows) {
        if (s.block->control[static_cast<std::size_t>(r)]) c.rows.push_back(r);
      }
      controls.push_back(std::move(c));
    }
    const Eigen::MatrixXd xc = stack(controls);
    const Eigen::VectorXd ac = stack(controls, true).col(0);
    AgeModel model = fit_age_regression(xc, std::span<const double>(ac.data(), static_cast<std::size_t>(ac.size())));
    model.subtract_intercept = cfg.subtract_intercept;
    n.age = std::move(model);
  }
  Eigen::MatrixXd x = stack(train);
  if (n.age) {
    const Eigen::VectorXd a = stack(train, true).col(0);
    apply_age_regression(x, std::span<const double>(a.data(), static_cast<std::size_t>(a.size())), *n.age);
  }
  Eigen::Index width = x.cols();
  if (cfg.zscore) {
    n.z = standardize_fit(x);
    x = standardize_apply(x, *n.z);
    width = x.cols();
  }
  n.columns.resize(static_cast<std::size_t>(width));
  std::iota(n.columns.begin(), n.columns.end(), Eigen::Index{0});
  if (config.rfe_k > 0 && config.rfe_k < static_cast<std::size_t>(width)) {
    RfeOptions opts;
    opts.target_k = config.rfe_k;
    opts.n_trees = config.rfe_trees;
    opts.seed = config.seed;
    n.columns = rfe_select(x, stack_labels(train), opts).selected;
  }
  return n;
}

// Whole-block application. PerDataset z-scores with the block's own
// statistics but keeps the column set of the training fit.
Eigen::MatrixXd apply_normalizer(const Block& b, const Normalizer& n, const NormalizeConfig& cfg) {
  Eigen::MatrixXd x = age_correct(b, n);
  if (n.z) {
    if (cfg.fit_on == FitOn::PerDataset) {
      Eigen::MatrixXd kept = x(Eigen::all, n.z->kept);
      const Eigen::RowVectorXd mean = kept.colwise().mean();
      kept.rowwise() -= mean;
      const Eigen::RowVectorXd sd = (kept.colwise().squaredNorm() / static_cast<double>(kept.rows())).cwiseSqrt();
      for (Eigen::Index c = 0; c < kept.cols(); ++c) {
        if (sd[c] > 0.0) {
          kept.col(c) /= sd[c];
        } else {
          kept.col(c).setZero();
        }
      }
      x = std::move(kept);
    } else {
      x = standardize_apply(x, *n.z);
    }
  }
  return x(Eigen::all, n.columns);
}

Eigen::MatrixXd feature_align(const Eigen::MatrixXd& x, const Block& b, const ExperimentConfig& config,
                              const std::string& name) {
  auto ref = dataset_reference_matrix(x, b.subject_idx, name, config.shrinkage, config.center);
  return align_rows(x, make_transform(std::move(ref)));
}

Metrics aggregate(const std::vector<Metrics>& folds) {
  Metrics m;
  for (const auto& f : folds) {
    m.epoch_accuracy += f.epoch_accuracy;
    m.subject_accuracy += f.subject_accuracy;
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 2; ++j) m.confusion[i][j] += f.confusion[i][j];
    }
    m.n_epochs += f.n_epochs;
    m.n_subjects += f.n_subjects;
  }
  if (!folds.empty()) {
    m.epoch_accuracy /= static_cast<double>(folds.size());
    m.subject_accuracy /= static_cast<double>(folds.size());
  }
  return m;
}

Metrics score_rows(const std::vector<int>& predicted, const Block& b, const std::vector<Eigen::Index>& rows) {
  std::vector<int> p, t;
  std::vector<std::string> s;
  for (auto r : rows) {
    const auto i = static_cast<std::size_t>(r);
    p.push_back(predicted[i]);
    t.push_back(b.labels[i]);
    s.push_back(b.subject[i]);
  }
  return score_predictions(p, t, s);
}

std::vector<Eigen::Index> fold_test_rows(const Block& target, const Fold& fold, const std::string& prefix) {
  return rows_where(target, [&](std::size_t r) {
    return target.subject[r] == prefix + fold.test_tbi || target.subject[r] == prefix + fold.test_control;
  });
}

void add_delta(ExperimentReport& report, const std::string& stage, const std::string& model, const std::string& hi,
               const std::string& lo) {
  const CellResult* a = report.find(stage, model, hi);
  const CellResult* b = report.find(stage, model, lo);
  if (!a || !b) return;
  report.deltas.push_back({stage, model, hi + "-" + lo, a->metrics.epoch_accuracy - b->metrics.epoch_accuracy,
                           a->metrics.subject_accuracy - b->metrics.subject_accuracy});
}

template <class Fn>
void with_stage_context(const std::string& stage, Fn&& fn) {
  try {
    fn();
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw PreconditionError("stage " + stage + ": " + e.what());
  }
}

Dataset channel_average(const Dataset& d, const DbaOptions& opts) {
  Dataset out = d;
  for (auto& s : out.subjects) {
    for (auto& e : s.epochs) {
      if (e.n_channels() > 1) e = dba_average_channels(e, opts);
    }
  }
  return out;
}

Dataset resample_dataset(const Dataset& d, double fs) {
  Dataset out = d;
  for (auto& s : out.subjects) {
    for (auto& e : s.epochs) {
      if (e.fs != fs) e = resample(e, fs);
    }
  }
  return out;
}

Dataset raw_align(const Dataset& d, const ExperimentConfig& config) {
  return align_trials(d, make_transform(dataset_reference_matrix(d, config.shrinkage, config.center)));
}

std::vector<std::optional<SleepStage>> stage_list(const ExperimentConfig& config) {
  std::vector<std::optional<SleepStage>> out;
  for (auto s : config.stages) out.emplace_back(s);
  if (out.empty()) out.emplace_back(std::nullopt);
  return out;
}

Dataset select_stage(const Dataset& d, std::optional<SleepStage> stage) {
  return stage ? filter_by_stage(d, *stage) : d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

DataSource parse_data_source(const json& j, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "expected an object with 'path' or 'synth'");
  reject_unknown(j, {"path", "synth"}, field);
  DataSource src;
  if (j.contains("path") == j.contains("synth")) throw ConfigError(field, "exactly one of 'path' or 'synth' required");
  if (auto it = j.find("path"); it != j.end()) {
    if (!it->is_string()) throw ConfigError(field + ".path", "expected a string");
    src.path = it->get<std::string>();
  } else {
    SynthSpec spec;
    try {
      from_json(j.at("synth"), spec);
      spec.validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ConfigError(field + ".synth." + e.field(), e.what());
    }
    src.synth_seed_given = j.at("synth").contains("seed");
    src.synth = std::move(spec);
  }
  return src;
}

PreprocessConfig parse_preprocess(const json& j) {
  PreprocessConfig p;
  if (j.is_boolean()) {
    p.enabled = j.get<bool>();
    return p;
  }
  if (!j.is_object()) throw ConfigError("preprocess", "expected an object or boolean");
  reject_unknown(j, {"enabled", "bandpass", "taper_hz", "reject_z"}, "preprocess");
  read_field(j, "enabled", p.enabled, "preprocess");
  if (auto it = j.find("bandpass"); it != j.end()) p.bandpass = parse_band(*it, "preprocess.bandpass");
  read_field(j, "taper_hz", p.taper_hz, "preprocess");
  read_field(j, "reject_z", p.reject_z, "preprocess");
  if (!(p.taper_hz >= 0.0)) throw ConfigError("preprocess.taper_hz", "must be >= 0");
  return p;
}

ExperimentConfig parse_experiment_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config", "expected a JSON object");
  reject_unknown(doc,
                 {"source", "target", "stages", "models", "space", "alignment", "center", "shrinkage", "preprocess",
                  "normalize", "features", "rfe_k", "rfe_trees", "n_folds", "seed", "dba", "output"},
                 "");
  ExperimentConfig c;
  c.raw = doc;
  if (!doc.contains("source")) throw ConfigError("source", "required");
  if (!doc.contains("target")) throw ConfigError("target", "required");
  c.source = parse_data_source(doc.at("source"), "source");
  c.target = parse_data_source(doc.at("target"), "target");

  if (auto it = doc.find("stages"); it != doc.end()) {
    if (!it->is_array()) throw ConfigError("stages", "expected an array of stage names");
    for (const auto& s : *it) {
      try {
        c.stages.push_back(parse_stage(s.get<std::string>()));
      } catch (const std::exception& e) {
        throw ConfigError("stages", e.what());
      }
    }
  }
  auto models = doc.find("models");
  if (models == doc.end() || !models->is_array() || models->empty()) {
    throw ConfigError("models", "at least one model required");
  }
  for (const auto& m : *models) {
    try {
      c.models.push_back(m.get<ModelSpec>());
    } catch (const ValidationError& e) {
      throw ConfigError("models." + e.field(), e.what());
    } catch (const json::exception& e) {
      throw ConfigError("models", e.what());
    }
  }
  std::set<std::string> labels;
  for (const auto& m : c.models) {
    if (!labels.insert(m.label()).second) throw ConfigError("models", "duplicate model " + m.label());
  }
  if (auto it = doc.find("space"); it != doc.end()) {
    try {
      c.space = parse_space(it->get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError("space", e.what());
    }
  }
  read_field(doc, "alignment", c.alignment, "");
  read_field(doc, "center", c.center, "");
  read_field(doc, "shrinkage", c.shrinkage, "");
  if (!(c.shrinkage >= 0.0 && c.shrinkage <= 1.0)) throw ConfigError("shrinkage", "must lie in [0, 1]");
  if (auto it = doc.find("preprocess"); it != doc.end()) c.preprocess = parse_preprocess(*it);
  if (auto it = doc.find("normalize"); it != doc.end()) {
    const auto& n = *it;
    if (!n.is_object()) throw ConfigError("normalize", "expected an object");
    reject_unknown(n, {"logit", "age_regression", "subtract_intercept", "zscore", "fit_on"}, "normalize");
    read_field(n, "logit", c.normalize.logit, "normalize");
    read_field(n, "age_regression", c.normalize.age_regression, "normalize");
    read_field(n, "subtract_intercept", c.normalize.subtract_intercept, "normalize");
    read_field(n, "zscore", c.normalize.zscore, "normalize");
    std::string fit_on = "train";
    read_field(n, "fit_on", fit_on, "normalize");
    if (fit_on == "train") {
      c.normalize.fit_on = FitOn::Train;
    } else if (fit_on == "per_dataset") {
      c.normalize.fit_on = FitOn::PerDataset;
    } else {
      throw ConfigError("normalize.fit_on", "expected train or per_dataset");
    }
  }
  if (auto it = doc.find("features"); it != doc.end()) {
    const auto& f = *it;
    if (!f.is_object()) throw ConfigError("features", "expected an object");
    reject_unknown(f, {"welch_seconds", "welch_overlap", "taper_hz", "pac_bins"}, "features");
    read_field(f, "welch_seconds", c.features.welch.seg_seconds, "features");
    read_field(f, "welch_overlap", c.features.welch.overlap, "features");
    read_field(f, "taper_hz", c.features.taper_hz, "features");
    read_field(f, "pac_bins", c.features.pac_bins, "features");
    if (!(c.features.welch.seg_seconds > 0.0)) throw ConfigError("features.welch_seconds", "must be > 0");
    if (!(c.features.welch.overlap >= 0.0 && c.features.welch.overlap < 1.0)) {
      throw ConfigError("features.welch_overlap", "must lie in [0, 1)");
    }
    if (c.features.pac_bins < 2) throw ConfigError("features.pac_bins", "must be >= 2");
  }
  read_field(doc, "rfe_k", c.rfe_k, "");
  read_field(doc, "rfe_trees", c.rfe_trees, "");
  read_field(doc, "n_folds", c.n_folds, "");
  if (c.n_folds < 1) throw ConfigError("n_folds", "must be >= 1");
  if (c.rfe_trees < 1) throw ConfigError("rfe_trees", "must be >= 1");
  if (!doc.contains("seed")) throw ConfigError("seed", "required (in the config or via --seed)");
  read_field(doc, "seed", c.seed, "");
  if (auto it = doc.find("dba"); it != doc.end()) {
    const auto& d = *it;
    if (!d.is_object()) throw ConfigError("dba", "expected an object");
    reject_unknown(d, {"max_iters", "tol", "window"}, "dba");
    read_field(d, "max_iters", c.dba.max_iters, "dba");
    read_field(d, "tol", c.dba.tol, "dba");
    if (auto w = d.find("window"); w != d.end()) {
      if (w->is_null()) {
        c.dba.window.reset();
      } else if (w->is_number_unsigned()) {
        c.dba.window = w->get<std::size_t>();
      } else {
        throw ConfigError("dba.window", "expected a non-negative integer or null");
      }
    }
  }
  read_field(doc, "output", c.output, "");
  return c;
}

Dataset materialize(const DataSource& source, std::uint64_t run_seed, std::uint64_t offset) {
  if (source.path) return load_dataset(*source.path);
  if (!source.synth) throw ConfigError("source", "no dataset given");
  SynthSpec spec = *source.synth;
  if (!source.synth_seed_given) spec.seed = run_seed + offset;
  return synth_dataset(spec);
}

Dataset preprocess_dataset(const Dataset& dataset, const PreprocessConfig& config, PreprocessSummary* summary) {
  Dataset out{dataset.name, {}};
  PreprocessSummary local;
  for (const auto& subject : dataset.subjects) {
    SubjectRecord s = subject;
    local.n_in += s.epochs.size();
    if (!config.enabled) {
      out.subjects.push_back(std::move(s));
      continue;
    }
    for (auto& e : s.epochs) e = fft_bandpass(e, config.bandpass, config.taper_hz);
    if (config.reject_z > 0.0 && s.epochs.size() >= 3) {
      auto [kept, report] = reject_epochs(s, config.reject_z);
      local.n_dropped += report.n_dropped();
      s = std::move(kept);
    }
    if (!s.epochs.empty()) out.subjects.push_back(std::move(s));
  }
  if (summary) *summary = local;
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

const CellResult* ExperimentReport::find(std::string_view stage, std::string_view model,
                                         std::string_view case_name) const {
  for (const auto& c : cells) {
    if (c.stage == stage && c.model == model && c.case_name == case_name) return &c;
  }
  return nullptr;
}

ExperimentReport run_intra(const ExperimentConfig& config) {
  ExperimentReport report;
  report.experiment = "intra";
  report.seed = config.seed;
  report.config = config.raw;
  const Dataset source_all = materialize(config.source, config.seed, 0);
  const Dataset target_all = materialize(config.target, config.seed, 1);

  for (const auto stage : stage_list(config)) {
    const std::string name = stage_label(stage);
    with_stage_context(name, [&] {
      StageSummary summary;
      summary.stage = name;
      PreprocessSummary ps, pt;
      const Dataset source = preprocess_dataset(select_stage(source_all, stage), config.preprocess, &ps);
      const Dataset target = preprocess_dataset(select_stage(target_all, stage), config.preprocess, &pt);
      summary.source_epochs = ps.n_in - ps.n_dropped;
      summary.target_epochs = pt.n_in - pt.n_dropped;
      summary.source_dropped = ps.n_dropped;
      summary.target_dropped = pt.n_dropped;
      const SplitPlan plan = plan_independent_validation(target, config.n_folds, config.seed);
      summary.folds = plan.folds;

      struct Variant {
        std::string case_name;
        Eigen::MatrixXd train;
        Eigen::MatrixXd test;
      };
      std::vector<Variant> variants;

      const Block s = make_block(source, config, false);
      const Block t = make_block(target, config, false);
      const Slice all_source{&s, rows_where(s, [](std::size_t) { return true; })};
      const Normalizer n = fit_normalizer({all_source}, config);
      const Eigen::MatrixXd sx = apply_normalizer(s, n, config.normalize);
      const Eigen::MatrixXd tx = apply_normalizer(t, n, config.normalize);
      summary.n_features = static_cast<std::size_t>(sx.cols());
      variants.push_back({"unaligned", sx, tx});

      if (config.alignment) {
        if (config.space == AlignSpace::FeatureSpace) {
          variants.push_back(
              {"aligned", feature_align(sx, s, config, source.name), feature_align(tx, t, config, target.name)});
        } else {
          const Block sa = make_block(raw_align(source, config), config, false);
          const Block ta = make_block(raw_align(target, config), config, false);
          const Normalizer na = fit_normalizer({Slice{&sa, all_source.rows}}, config);
          variants.push_back(
              {"aligned", apply_normalizer(sa, na, config.normalize), apply_normalizer(ta, na, config.normalize)});
        }
      }

      std::vector<std::vector<Eigen::Index>> test_rows;
      for (const auto& fold : plan.folds) test_rows.push_back(fold_test_rows(t, fold, ""));

      for (const auto& model : config.models) {
        for (const auto& v : variants) {
          const auto clf = train_model(model, v.train, s.labels, config.seed);
          const auto predicted = clf->predict_rows(v.test);
          CellResult cell{name, model.label(), v.case_name, {}, {}};
          for (const auto& rows : test_rows) cell.folds.push_back(score_rows(predicted, t, rows));
          cell.metrics = aggregate(cell.folds);
          report.cells.push_back(std::move(cell));
        }
        add_delta(report, name, model.label(), "aligned", "unaligned");
      }
      report.stages.push_back(std::move(summary));
    });
  }
  return report;
}

ExperimentReport run_inter(const ExperimentConfig& config) {
  ExperimentReport report;
  report.experiment = "inter";
  report.seed = config.seed;
  report.config = config.raw;
  const Dataset source_all = materialize(config.source, config.seed, 0);
  const Dataset target_all = materialize(config.target, config.seed, 1);
  if (source_all.name == target_all.name) {
    throw ConfigError("target.name", "source and target datasets need distinct names");
  }

  for (const auto stage : stage_list(config)) {
    const std::string name = stage_label(stage);
    with_stage_context(name, [&] {
      StageSummary summary;
      summary.stage = name;
      PreprocessSummary ps, pt;
      Dataset target = preprocess_dataset(select_stage(target_all, stage), config.preprocess, &pt);
      Dataset source = preprocess_dataset(select_stage(source_all, stage), config.preprocess, &ps);
      summary.source_epochs = ps.n_in - ps.n_dropped;
      summary.target_epochs = pt.n_in - pt.n_dropped;
      summary.source_dropped = ps.n_dropped;
      summary.target_dropped = pt.n_dropped;
      if (target.subjects.empty() || source.subjects.empty()) throw PreconditionError("no epochs left");

      target = channel_average(target, config.dba);
      source = channel_average(resample_dataset(source, *target.subjects.front().fs()), config.dba);
      const SplitPlan plan = plan_independent_validation(target, config.n_folds, config.seed);
      summary.folds = plan.folds;

      const Block s = make_block(source, config, true);
      const Block t = make_block(target, config, true);
      std::optional<Block> sa, ta;
      const bool do_c = config.alignment;
      if (do_c && config.space == AlignSpace::RawTrials) {
        sa = make_block(raw_align(source, config), config, true);
        ta = make_block(raw_align(target, config), config, true);
      }
      const std::string prefix = target.name + "/";
      const auto all_source = rows_where(s, [](std::size_t) { return true; });

      // [case][model] -> per-fold metrics
      std::map<std::string, std::vector<std::vector<Metrics>>> results;
      const std::vector<std::string> cases = do_c ? std::vector<std::string>{"a", "b", "c"}
                                                  : std::vector<std::string>{"a", "b"};
      for (const auto& c : cases) results[c].assign(config.models.size(), {});

      for (const auto& fold : plan.folds) {
        const std::set<std::string> train_ids(fold.train_subject_ids.begin(), fold.train_subject_ids.end());
        const auto target_train = rows_where(t, [&](std::size_t r) {
          return train_ids.count(t.subject[r].substr(prefix.size())) > 0;
        });
        const auto target_test = fold_test_rows(t, fold, prefix);
        if (target_train.empty() || target_test.empty()) throw PreconditionError("fold without train or test rows");

        auto run_case = [&](const std::string& case_name, const Block& sb, const Block& tb, bool with_source,
                            bool feature_tea) {
          std::vector<Slice> train{Slice{&tb, target_train}};
          if (with_source) train.insert(train.begin(), Slice{&sb, all_source});
          const Normalizer n = fit_normalizer(train, config);
          Eigen::MatrixXd tx = apply_normalizer(tb, n, config.normalize);
          Eigen::MatrixXd sx;
          if (with_source) sx = apply_normalizer(sb, n, config.normalize);
          if (feature_tea) {
            tx = feature_align(tx, tb, config, target.name);
            sx = feature_align(sx, sb, config, source.name);
          }
          summary.n_features = static_cast<std::size_t>(tx.cols());
          const Eigen::Index n_src = with_source ? sx.rows() : 0;
          Eigen::MatrixXd x(n_src + static_cast<Eigen::Index>(target_train.size()), tx.cols());
          std::vector<int> y;
          if (with_source) {
            x.topRows(n_src) = sx;
            y = sb.labels;
          }
          for (std::size_t i = 0; i < target_train.size(); ++i) {
            x.row(n_src + static_cast<Eigen::Index>(i)) = tx.row(target_train[i]);
            y.push_back(tb.labels[static_cast<std::size_t>(target_train[i])]);
          }
          for (std::size_t m = 0; m < config.models.size(); ++m) {
            const auto clf = train_model(config.models[m], x, y, config.seed);
            const auto predicted = clf->predict_rows(tx(target_test, Eigen::all));
            std::vector<int> full(tb.labels.size(), -1);
            for (std::size_t i = 0; i < target_test.size(); ++i) {
              full[static_cast<std::size_t>(target_test[i])] = predicted[i];
            }
            results[case_name][m].push_back(score_rows(full, tb, target_test));
          }
        };
        run_case("a", s, t, false, false);
        run_case("b", s, t, true, false);
        if (do_c) {
          if (config.space == AlignSpace::RawTrials) {
            run_case("c", *sa, *ta, true, false);
          } else {
            run_case("c", s, t, true, true);
          }
        }
      }

      for (std::size_t m = 0; m < config.models.size(); ++m) {
        const std::string label = config.models[m].label();
        for (const auto& c : cases) {
          CellResult cell{name, label, c, aggregate(results[c][m]), results[c][m]};
          report.cells.push_back(std::move(cell));
        }
        add_delta(report, name, label, "c", "b");
        add_delta(report, name, label, "c", "a");
        add_delta(report, name, label, "b", "a");
      }
      report.stages.push_back(std::move(summary));
    });
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report I/O

void to_json(json& j, const ExperimentReport& r) {
  json stages = json::array();
  for (const auto& s : r.stages) {
    stages.push_back({{"stage", s.stage},
                      {"source_epochs", s.source_epochs},
                      {"target_epochs", s.target_epochs},
                      {"source_dropped", s.source_dropped},
                      {"target_dropped", s.target_dropped},
                      {"n_features", s.n_features},
                      {"folds", s.folds}});
  }
  json cells = json::array();
  for (const auto& c : r.cells) {
    cells.push_back(
        {{"stage", c.stage}, {"model", c.model}, {"case", c.case_name}, {"metrics", c.metrics}, {"folds", c.folds}});
  }
  json deltas = json::array();
  for (const auto& d : r.deltas) {
    deltas.push_back({{"stage", d.stage},
                      {"model", d.model},
                      {"comparison", d.comparison},
                      {"epoch_accuracy", d.epoch_accuracy},
                      {"subject_accuracy", d.subject_accuracy}});
  }
  j = {{"experiment", r.experiment}, {"version", r.version}, {"seed", r.seed},   {"config", r.config},
       {"stages", stages},           {"cells", cells},        {"deltas", deltas}};
}

void from_json(const json& j, ExperimentReport& r) {
  r.experiment = j.at("experiment").get<std::string>();
  r.version = j.at("version").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config = j.at("config");
  r.stages.clear();
  for (const auto& s : j.at("stages")) {
    StageSummary st;
    st.stage = s.at("stage").get<std::string>();
    st.source_epochs = s.at("source_epochs").get<std::size_t>();
    st.target_epochs = s.at("target_epochs").get<std::size_t>();
    st.source_dropped = s.at("source_dropped").get<std::size_t>();
    st.target_dropped = s.at("target_dropped").get<std::size_t>();
    st.n_features = s.at("n_features").get<std::size_t>();
    st.folds = s.at("folds").get<std::vector<Fold>>();
    r.stages.push_back(std::move(st));
  }
  r.cells.clear();
  for (const auto& c : j.at("cells")) {
    r.cells.push_back({c.at("stage").get<std::string>(), c.at("model").get<std::string>(),
                       c.at("case").get<std::string>(), c.at("metrics").get<Metrics>(),
                       c.at("folds").get<std::vector<Metrics>>()});
  }
  r.deltas.clear();
  for (const auto& d : j.at("deltas")) {
    r.deltas.push_back({d.at("stage").get<std::string>(), d.at("model").get<std::string>(),
                        d.at("comparison").get<std::string>(), d.at("epoch_accuracy").get<double>(),
                        d.at("subject_accuracy").get<double>()});
  }
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  {
    std::ofstream out(dir / "report.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "report.json").string());
    out << json(report).dump(2) << '\n';
    if (!out) throw IoError("write failed: " + (dir / "report.json").string());
  }
  std::ofstream csv(dir / "accuracy.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write " + (dir / "accuracy.csv").string());
  csv << "stage,model,case,epoch_acc,subject_acc\n";
  char buf[64];
  for (const auto& c : report.cells) {
    csv << c.stage << ',' << c.model << ',' << c.case_name << ',';
    std::snprintf(buf, sizeof buf, "%.17g,", c.metrics.epoch_accuracy);
    csv << buf;
    std::snprintf(buf, sizeof buf, "%.17g\n", c.metrics.subject_accuracy);
    csv << buf;
  }
  if (!csv) throw IoError("write failed: " + (dir / "accuracy.csv").string());
}

ExperimentReport read_report(const std::filesystem::path& report_json) {
  std::ifstream in(report_json, std::ios::binary);
  if (!in) throw MissingFileError("cannot open " + report_json.string());
  try {
    return json::parse(in).get<ExperimentReport>();
  } catch (const json::exception& e) {
    throw IoError(report_json.string() + ": " + e.what());
  }
}

}  // namespace teashift
