#include "bofbench/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bofbench/errors.hpp"
#include "bofbench/parallel.hpp"

namespace bof {
namespace {

const std::vector<std::string> kColumns = {"item_id",      "audio_path",
                                           "class_label",  "recording_id",
                                           "location_id",  "segment_index"};

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

struct Row {
  std::size_t line_no;
  ManifestEntry entry;
  bool has_segment_index;
};

[[noreturn]] void row_error(const std::filesystem::path& path, std::size_t line_no,
                            const std::string& what) {
  throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

std::vector<Row> parse_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open manifest");

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty manifest");
  auto header = split_csv_line(line);
  if (header != kColumns) {
    std::string want;
    for (const auto& c : kColumns) want += (want.empty() ? "" : ",") + c;
    throw DataError(path.string() + ": bad header (expected '" + want + "')");
  }

  const std::filesystem::path base = path.parent_path();
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != kColumns.size())
      row_error(path, line_no,
                "expected " + std::to_string(kColumns.size()) + " fields, got " +
                    std::to_string(fields.size()));
    Row row;
    row.line_no = line_no;
    row.entry.item_id = fields[0];
    row.entry.class_label = fields[2];
    row.entry.recording_id = fields[3];
    row.entry.location_id = fields[4];
    for (std::size_t i = 0; i < 5; ++i)
      if (fields[i].empty())
        row_error(path, line_no, "empty " + kColumns[i] + " field");
    std::filesystem::path audio(fields[1]);
    row.entry.audio_path = audio.is_absolute() ? audio : base / audio;
    row.has_segment_index = !fields[5].empty();
    if (row.has_segment_index) {
      try {
        row.entry.segment_index = std::stoi(fields[5]);
      } catch (const std::exception&) {
        row_error(path, line_no, "bad segment_index '" + fields[5] + "'");
      }
      if (row.entry.segment_index < 0)
        row_error(path, line_no, "negative segment_index");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": manifest has no rows");
  return rows;
}

void validate_items(const std::filesystem::path& path,
                    const DatasetManifest& manifest) {
  std::set<std::string> ids;
  std::set<std::pair<std::string, int>> rec_segments;
  std::map<std::string, std::size_t> class_counts;
  for (const auto& item : manifest.items) {
    if (!ids.insert(item.item_id).second)
      throw DataError(path.string() + ": duplicate item_id '" + item.item_id + "'");
    if (manifest.policy.is_segmented() &&
        !rec_segments.insert({item.recording_id, item.segment_index}).second)
      throw DataError(path.string() + ": duplicate (recording_id, segment_index) (" +
                      item.recording_id + ", " + std::to_string(item.segment_index) + ")");
    class_counts[item.class_label]++;
  }
  if (class_counts.size() < 2)
    throw DataError(path.string() + ": need at least 2 distinct classes, found " +
                    std::to_string(class_counts.size()));
  for (const auto& [label, count] : class_counts)
    if (count < 2)
      throw DataError(path.string() + ": class '" + label + "' has " +
                      std::to_string(count) + " item(s) under policy " +
                      manifest.policy.label() + "; need at least 2");
}

}  // namespace

std::string UnitPolicy::label() const {
  if (!is_segmented()) return "whole_recording";
  std::ostringstream out;
  out << "segmented(" << unit_seconds << "s)";
  return out.str();
}

std::vector<std::string> DatasetManifest::labels() const {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.class_label);
  return out;
}

std::vector<std::string> DatasetManifest::item_ids() const {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.item_id);
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path, UnitPolicy policy) {
  if (policy.is_segmented() && policy.unit_seconds <= 0.0)
    throw UsageError("segmented policy requires positive unit_seconds");

  auto rows = parse_rows(path);

  bool any_segmented = std::any_of(rows.begin(), rows.end(),
                                   [](const Row& r) { return r.has_segment_index; });
  bool all_segmented = std::all_of(rows.begin(), rows.end(),
                                   [](const Row& r) { return r.has_segment_index; });
  if (any_segmented && !all_segmented)
    throw DataError(path.string() +
                    ": segment_index must be set on all rows or on none");
  if (any_segmented && !policy.is_segmented())
    throw DataError(path.string() +
                    ": manifest rows carry segment indices but policy is whole_recording");

  for (const auto& row : rows)
    if (!std::filesystem::exists(row.entry.audio_path))
      row_error(path, row.line_no,
                "audio file not found: " + row.entry.audio_path.string());

  DatasetManifest manifest;
  manifest.name = path.stem().string();
  manifest.policy = policy;

  if (!policy.is_segmented() || any_segmented) {
    for (auto& row : rows) manifest.items.push_back(std::move(row.entry));
  } else {
    // Expand recordings into units from header-probed durations.
    for (const auto& row : rows) {
      WavInfo info;
      try {
        info = probe_wav(row.entry.audio_path);
      } catch (const DataError& e) {
        row_error(path, row.line_no, e.what());
      }
      std::size_t units =
          segment_count(info.frames, info.sample_rate, policy.unit_seconds);
      if (units == 0) {
        manifest.warnings.push_back(
            "recording '" + row.entry.item_id + "' (" +
            std::to_string(info.duration_seconds()) +
            " s) is shorter than half a unit and was dropped");
        continue;
      }
      for (std::size_t k = 0; k < units; ++k) {
        ManifestEntry item = row.entry;
        item.item_id += "-u" + std::to_string(k);
        item.segment_index = static_cast<int>(k);
        manifest.items.push_back(std::move(item));
      }
    }
    if (manifest.items.empty())
      throw DataError(path.string() + ": no recording yields a unit under policy " +
                      policy.label());
  }

  validate_items(path, manifest);
  return manifest;
}

std::vector<std::pair<std::string, SampleBuffer>> materialize(
    const DatasetManifest& manifest, bool normalize_audio, unsigned threads) {
  // Group items by source file so each recording is decoded once.
  std::vector<std::filesystem::path> files;
  std::map<std::string, std::size_t> file_index;
  std::vector<std::vector<std::size_t>> items_of_file;
  for (std::size_t i = 0; i < manifest.items.size(); ++i) {
    const auto& item = manifest.items[i];
    auto key = item.audio_path.string();
    auto [it, inserted] = file_index.try_emplace(key, files.size());
    if (inserted) {
      files.push_back(item.audio_path);
      items_of_file.emplace_back();
    }
    items_of_file[it->second].push_back(i);
  }

  std::vector<std::pair<std::string, SampleBuffer>> out(manifest.items.size());
  parallel_for(files.size(), threads, [&](std::size_t f) {
    SampleBuffer rec;
    try {
      rec = decode_wav(files[f]);
      if (normalize_audio) rec = normalize(std::move(rec));
    } catch (const DataError& e) {
      throw PipelineError("materialize: item '" +
                          manifest.items[items_of_file[f].front()].item_id +
                          "': " + e.what());
    }
    if (!manifest.policy.is_segmented()) {
      for (std::size_t idx : items_of_file[f]) {
        const auto& item = manifest.items[idx];
        SampleBuffer buf = rec;
        buf.source_id = item.item_id;
        out[idx] = {item.item_id, std::move(buf)};
      }
      return;
    }
    auto units = segment(rec, manifest.policy.unit_seconds);
    for (std::size_t idx : items_of_file[f]) {
      const auto& item = manifest.items[idx];
      if (static_cast<std::size_t>(item.segment_index) >= units.size())
        throw PipelineError("materialize: item '" + item.item_id + "': segment " +
                            std::to_string(item.segment_index) + " out of range (" +
                            files[f].string() + " has " + std::to_string(units.size()) +
                            " units)");
      SampleBuffer buf = units[static_cast<std::size_t>(item.segment_index)];
      buf.source_id = item.item_id;
      out[idx] = {item.item_id, std::move(buf)};
    }
  });
  return out;
}

LeakageSummary leakage_summary(const DatasetManifest& manifest) {
  std::map<std::string, std::vector<const ManifestEntry*>> by_class;
  for (const auto& item : manifest.items) by_class[item.class_label].push_back(&item);

  LeakageSummary summary;
  summary.dataset = manifest.name;
  summary.policy = manifest.policy.label();
  for (const auto& [label, items] : by_class) {
    ClassLeakage cl;
    cl.class_label = label;
    cl.items = items.size();
    std::set<std::string> recordings, locations;
    std::map<std::string, std::size_t> rec_counts;
    for (const auto* item : items) {
      recordings.insert(item->recording_id);
      locations.insert(item->location_id);
      rec_counts[item->recording_id]++;
    }
    cl.recordings = recordings.size();
    cl.locations = locations.size();
    std::size_t total_pairs = items.size() * (items.size() - 1) / 2;
    std::size_t shared_pairs = 0;
    for (const auto& [rec, count] : rec_counts) shared_pairs += count * (count - 1) / 2;
    cl.shared_recording_pair_fraction =
        total_pairs > 0 ? static_cast<double>(shared_pairs) / static_cast<double>(total_pairs)
                        : 0.0;
    summary.per_class.push_back(std::move(cl));
  }
  return summary;
}

std::string LeakageSummary::to_json_string(int indent) const {
  nlohmann::json j;
  j["dataset"] = dataset;
  j["policy"] = policy;
  j["classes"] = nlohmann::json::array();
  for (const auto& cl : per_class) {
    j["classes"].push_back({{"class_label", cl.class_label},
                            {"items", cl.items},
                            {"recordings", cl.recordings},
                            {"locations", cl.locations},
                            {"shared_recording_pair_fraction",
                             cl.shared_recording_pair_fraction}});
  }
  return j.dump(indent);
}

}  // namespace bof
