// tea-shift command line: synth, features, align, intra, inter.

#include "teashift/align.hpp"
#include "teashift/dataset_io.hpp"
#include "teashift/experiment.hpp"
#include "teashift/features.hpp"
#include "teashift/normalize.hpp"
#include "teashift/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using nlohmann::json;
using namespace teashift;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

json read_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("--config", "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("--config", path + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void check_keys(const json& doc, std::initializer_list<const char*> known) {
  if (!doc.is_object()) throw ConfigError("config", "expected a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(it.key(), "unknown field");
  }
}

std::uint64_t run_seed(const Common& c, const json& doc) {
  if (c.seed) return *c.seed;
  return doc.value("seed", std::uint64_t{0});
}

std::filesystem::path out_dir(const Common& c, const json& doc) {
  if (!c.out.empty()) return c.out;
  if (auto it = doc.find("output"); it != doc.end() && it->is_string()) return it->get<std::string>();
  throw ConfigError("--out", "no output directory given");
}

// {"dataset": {...}, "stages": [...], "preprocess": ...} shared by features/align.
struct DatasetJob {
  DataSource source;
  std::vector<SleepStage> stages;
  PreprocessConfig preprocess;
};

DatasetJob parse_dataset_job(const json& doc) {
  DatasetJob job;
  if (!doc.contains("dataset")) throw ConfigError("dataset", "required");
  job.source = parse_data_source(doc.at("dataset"), "dataset");
  if (auto it = doc.find("stages"); it != doc.end()) {
    for (const auto& s : *it) {
      try {
        job.stages.push_back(parse_stage(s.get<std::string>()));
      } catch (const std::exception& e) {
        throw ConfigError("stages", e.what());
      }
    }
  }
  if (auto it = doc.find("preprocess"); it != doc.end()) job.preprocess = parse_preprocess(*it);
  return job;
}

Dataset load_job(const DatasetJob& job, std::uint64_t seed) {
  Dataset d = materialize(job.source, seed, 0);
  if (!job.stages.empty()) {
    Dataset merged{d.name, {}};
    for (const auto& s : d.subjects) {
      SubjectRecord r = s;
      r.epochs.clear();
      for (const auto& e : s.epochs) {
        for (auto st : job.stages) {
          if (collapse(e.stage) == collapse(st) && (st == SleepStage::NREM || e.stage == st)) {
            r.epochs.push_back(e);
            break;
          }
        }
      }
      if (!r.epochs.empty()) merged.subjects.push_back(std::move(r));
    }
    d = std::move(merged);
  }
  return preprocess_dataset(d, job.preprocess);
}

void write_row_index(const FeatureTable& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "row,subject_id,group,age_years,stage\n";
  char age[32];
  for (std::size_t r = 0; r < t.subject_of_row.size(); ++r) {
    const std::size_t s = t.subject_of_row[r];
    std::snprintf(age, sizeof age, "%.17g", t.subject_ages[s]);
    out << r << ',' << t.subject_ids[s] << ',' << to_string(t.subject_groups[s]) << ',' << age << ','
        << to_string(t.stages[r]) << '\n';
  }
}

int cmd_synth(const Common& c) {
  const json doc = read_config(c.config);
  SynthSpec spec;
  const json& body = doc.contains("synth") ? doc.at("synth") : doc;
  if (doc.contains("synth")) check_keys(doc, {"synth", "seed", "output"});
  try {
    from_json(body, spec);
    if (c.seed) spec.seed = *c.seed;
    spec.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError(e.field(), e.what());
  }
  const auto dir = out_dir(c, doc);
  write_dataset(synth_dataset(spec), dir);
  std::cout << "wrote " << dir.string() << '\n';
  return 0;
}

int cmd_features(const Common& c) {
  const json doc = read_config(c.config);
  check_keys(doc, {"dataset", "stages", "preprocess", "logit", "seed", "output"});
  const DatasetJob job = parse_dataset_job(doc);
  const bool logit = doc.value("logit", false);
  const auto dir = out_dir(c, doc);
  FeatureTable table = extract_dataset_features(load_job(job, run_seed(c, doc)));
  if (logit) apply_log_transforms(table.features);
  ensure_dir(dir);
  write_feature_csv(table.features, dir / "features.csv");
  write_row_index(table, dir / "rows.csv");
  std::cout << table.features.rows() << " rows x " << table.features.cols() << " features -> " << dir.string()
            << '\n';
  return 0;
}

int cmd_align(const Common& c) {
  const json doc = read_config(c.config);
  check_keys(doc, {"dataset", "stages", "preprocess", "space", "shrinkage", "center", "seed", "output"});
  const DatasetJob job = parse_dataset_job(doc);
  AlignSpace space = AlignSpace::RawTrials;
  double shrinkage = kDefaultShrinkage;
  bool center = false;
  try {
    space = parse_space(doc.value("space", std::string("raw")));
    shrinkage = doc.value("shrinkage", kDefaultShrinkage);
    center = doc.value("center", false);
  } catch (const ValidationError& e) {
    throw ConfigError(e.field(), e.what());
  } catch (const json::exception& e) {
    throw ConfigError("config", e.what());
  }
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw ConfigError("shrinkage", "must lie in [0, 1]");
  const auto dir = out_dir(c, doc);
  const Dataset d = load_job(job, run_seed(c, doc));
  ensure_dir(dir);

  json summary{{"dataset", d.name}, {"space", std::string(to_string(space))}, {"shrinkage", shrinkage}};
  if (space == AlignSpace::RawTrials) {
    const auto transform = make_transform(dataset_reference_matrix(d, shrinkage, center));
    const Dataset aligned = align_trials(d, transform);
    summary["residual_before"] = residual_identity(d);
    summary["residual_after"] = residual_identity(aligned);
    write_json(dir / "transform.json", transform);
    write_dataset(aligned, dir / "aligned");
  } else {
    FeatureTable table = extract_dataset_features(d);
    apply_log_transforms(table.features);
    const Standardizer z = standardize_fit(table.features.values);
    const Eigen::MatrixXd x = standardize_apply(table.features.values, z);
    const auto transform = make_transform(dataset_reference_matrix(x, table.subject_of_row, d.name, shrinkage, center));
    const Eigen::MatrixXd aligned = align_rows(x, transform);
    summary["residual_before"] = residual_identity(x, table.subject_of_row);
    summary["residual_after"] = residual_identity(aligned, table.subject_of_row);
    FeatureMatrix out{aligned, {}};
    for (auto k : z.kept) out.names.push_back(table.features.names[static_cast<std::size_t>(k)]);
    write_json(dir / "transform.json", transform);
    write_json(dir / "standardizer.json", z);
    write_feature_csv(out, dir / "aligned_features.csv");
    write_row_index(table, dir / "rows.csv");
  }
  write_json(dir / "summary.json", summary);
  std::cout << "residual " << summary["residual_before"].get<double>() << " -> "
            << summary["residual_after"].get<double>() << '\n';
  return 0;
}

int cmd_experiment(const Common& c, bool inter) {
  json doc = read_config(c.config);
  if (c.seed && doc.is_object()) doc["seed"] = *c.seed;
  const ExperimentConfig config = parse_experiment_config(doc);
  std::filesystem::path dir = c.out.empty() ? std::filesystem::path(config.output) : std::filesystem::path(c.out);
  if (dir.empty()) throw ConfigError("--out", "no output directory given");
  const ExperimentReport report = inter ? run_inter(config) : run_intra(config);
  emit_report(report, dir);
  for (const auto& cell : report.cells) {
    std::printf("%-6s %-6s %-10s epoch %.3f subject %.3f\n", cell.stage.c_str(), cell.model.c_str(),
                cell.case_name.c_str(), cell.metrics.epoch_accuracy, cell.metrics.subject_accuracy);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QEEG features, transfer Euclidean alignment and covariate-shift experiments"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common common;
  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", common.config, "JSON configuration file")->required();
    sub->add_option("--seed", common.seed, "run seed (overrides the config)");
    sub->add_option("--out", common.out, "output directory");
    return sub;
  };
  auto* synth = add("synth", "generate a synthetic dataset");
  auto* features = add("features", "extract per-epoch feature rows");
  auto* align = add("align", "fit and apply a dataset alignment transform");
  auto* intra = add("intra", "source-to-target experiment, aligned vs unaligned");
  auto* inter = add("inter", "cross-species experiment, cases a/b/c");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(common);
    if (features->parsed()) return cmd_features(common);
    if (align->parsed()) return cmd_align(common);
    if (intra->parsed()) return cmd_experiment(common, false);
    if (inter->parsed()) return cmd_experiment(common, true);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
