#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bofbench/audio_io.hpp"

namespace bof {

enum class UnitPolicyKind { whole_recording, segmented };

struct UnitPolicy {
  UnitPolicyKind kind = UnitPolicyKind::whole_recording;
  double unit_seconds = 180.0;

  static UnitPolicy whole() { return {UnitPolicyKind::whole_recording, 0.0}; }
  static UnitPolicy segmented(double seconds) {
    return {UnitPolicyKind::segmented, seconds};
  }
  bool is_segmented() const { return kind == UnitPolicyKind::segmented; }
  std::string label() const;
};

// One evaluation item. Under the segmented policy an item is one unit of a
// recording and segment_index is set; under whole_recording it is the
// recording itself and segment_index is -1.
struct ManifestEntry {
  std::string item_id;
  std::filesystem::path audio_path;  // resolved against the manifest directory
  std::string class_label;
  std::string recording_id;
  std::string location_id;
  int segment_index = -1;
};

struct DatasetManifest {
  std::string name;  // manifest file stem
  UnitPolicy policy;
  std::vector<ManifestEntry> items;
  std::vector<std::string> warnings;

  std::vector<std::string> labels() const;
  std::vector<std::string> item_ids() const;
};

// Parses and validates a manifest CSV with header
// item_id,audio_path,class_label,recording_id,location_id,segment_index.
// Rows normally describe whole recordings (empty segment_index); under the
// segmented policy they are expanded into units by probing each WAV header
// for its duration. A manifest whose rows already carry segment indices is
// accepted as a pre-segmented item list (segmented policy only).
DatasetManifest load_manifest(const std::filesystem::path& path, UnitPolicy policy);

// Decodes each recording once, optionally peak-normalizes it, and produces
// the per-item sample buffers in manifest order.
std::vector<std::pair<std::string, SampleBuffer>> materialize(
    const DatasetManifest& manifest, bool normalize_audio, unsigned threads = 0);

struct ClassLeakage {
  std::string class_label;
  std::size_t items = 0;
  std::size_t recordings = 0;
  std::size_t locations = 0;
  // Fraction of same-class item pairs sharing a recording_id.
  double shared_recording_pair_fraction = 0.0;
};

struct LeakageSummary {
  std::string dataset;
  std::string policy;
  std::vector<ClassLeakage> per_class;

  std::string to_json_string(int indent = 2) const;
};

LeakageSummary leakage_summary(const DatasetManifest& manifest);

}  // namespace bof
