#include "teashift/dataset_io.hpp"

#include "teashift/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace teashift {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(sizeof(float) == 4);

void store_le(float v, char* out) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) {
    bits = ((bits & 0xFFu) << 24) | ((bits & 0xFF00u) << 8) | ((bits >> 8) & 0xFF00u) | (bits >> 24);
  }
  std::memcpy(out, &bits, 4);
}

float load_le(const char* in) {
  std::uint32_t bits;
  std::memcpy(&bits, in, 4);
  if constexpr (std::endian::native == std::endian::big) {
    bits = ((bits & 0xFFu) << 24) | ((bits & 0xFF00u) << 8) | ((bits >> 8) & 0xFF00u) | (bits >> 24);
  }
  return std::bit_cast<float>(bits);
}

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(key, "missing in " + where);
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(key, "bad value in " + where + ": " + e.what());
  }
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& path) {
  dataset.validate();
  std::error_code ec;
  fs::create_directories(path / "epochs", ec);
  if (ec) throw IoError("cannot create " + (path / "epochs").string() + ": " + ec.message());

  json manifest;
  manifest["name"] = dataset.name;
  manifest["subjects"] = json::array();
  for (const auto& subject : dataset.subjects) {
    json js;
    js["subject_id"] = subject.subject_id;
    js["species"] = std::string(to_string(subject.species));
    js["age_years"] = subject.age_years;
    js["group"] = std::string(to_string(subject.group));
    js["fs_hz"] = subject.fs().value_or(0.0);
    js["n_channels"] = subject.n_channels().value_or(0);
    js["epochs"] = json::array();

    std::vector<char> bytes;
    for (const auto& e : subject.epochs) {
      js["epochs"].push_back({{"stage", std::string(to_string(e.stage))}, {"n_samples", e.n_samples()}});
      const auto offset = bytes.size();
      bytes.resize(offset + static_cast<std::size_t>(e.samples.size()) * 4);
      const double* src = e.samples.data();
      for (Eigen::Index i = 0; i < e.samples.size(); ++i) {
        store_le(static_cast<float>(src[i]), bytes.data() + offset + 4 * i);
      }
    }
    manifest["subjects"].push_back(std::move(js));

    const auto payload = path / "epochs" / (subject.subject_id + ".f32");
    std::ofstream out(payload, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + payload.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + payload.string());
  }

  std::ofstream out(path / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (path / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const fs::path& path) {
  const auto manifest_path = path / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw MissingFileError("missing " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ValidationError("manifest", std::string("unparseable JSON: ") + e.what());
  }

  Dataset dataset;
  dataset.name = required<std::string>(manifest, "name", "manifest");
  const auto subjects = required<json>(manifest, "subjects", "manifest");
  if (!subjects.is_array()) throw ValidationError("subjects", "must be an array");

  for (const auto& js : subjects) {
    SubjectRecord subject;
    subject.subject_id = required<std::string>(js, "subject_id", "subject");
    const std::string where = "subject " + subject.subject_id;
    subject.species = parse_species(required<std::string>(js, "species", where));
    subject.age_years = required<double>(js, "age_years", where);
    subject.group = parse_group(required<std::string>(js, "group", where));
    const double fs_hz = required<double>(js, "fs_hz", where);
    const auto n_channels = required<std::int64_t>(js, "n_channels", where);
    const auto epochs = required<json>(js, "epochs", where);
    if (n_channels < 0) throw ValidationError("n_channels", where + ": negative");

    std::size_t expected = 0;
    std::vector<std::pair<SleepStage, std::int64_t>> shapes;
    for (const auto& je : epochs) {
      const auto n_samples = required<std::int64_t>(je, "n_samples", where);
      if (n_samples < 0) throw ValidationError("n_samples", where + ": negative");
      shapes.emplace_back(parse_stage(required<std::string>(je, "stage", where)), n_samples);
      expected += static_cast<std::size_t>(n_channels * n_samples) * 4;
    }

    // Reject unsafe ids before touching the filesystem.
    SubjectRecord{subject.subject_id, subject.species, subject.age_years, subject.group, {}}.validate();

    const auto payload = path / "epochs" / (subject.subject_id + ".f32");
    std::ifstream pin(payload, std::ios::binary);
    if (!pin) throw MissingFileError("missing payload " + payload.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(pin)), std::istreambuf_iterator<char>());
    if (bytes.size() != expected) {
      throw ShapeMismatchError(where + ": manifest declares " + std::to_string(expected) +
                               " payload bytes, file has " + std::to_string(bytes.size()));
    }

    std::size_t offset = 0;
    for (const auto& [stage, n_samples] : shapes) {
      Epoch e;
      e.fs = fs_hz;
      e.stage = stage;
      e.samples.resize(n_channels, n_samples);
      double* dst = e.samples.data();
      for (Eigen::Index i = 0; i < e.samples.size(); ++i, offset += 4) {
        dst[i] = load_le(bytes.data() + offset);
      }
      if (!e.samples.allFinite()) throw NonFiniteError(where + ": non-finite samples in payload");
      subject.epochs.push_back(std::move(e));
    }
    dataset.subjects.push_back(std::move(subject));
  }
  dataset.validate();
  return dataset;
}

}  // namespace teashift
