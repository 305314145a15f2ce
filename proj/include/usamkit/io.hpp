#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "usamkit/mask.hpp"
#include "usamkit/records.hpp"

namespace usamkit {

inline constexpr int kRecordSchemaVersion = 1;

struct RleMask {
  // Alternating run lengths starting with a background run, row-major. The
  // first count may be 0 (mask starts with foreground); the trailing run is
  // always included so the counts sum to h*w.
  std::vector<int64_t> counts;
};

RleMask rle_encode(const BinaryMask& m);
// Validates non-negative counts summing to exactly height*width.
BinaryMask rle_decode(const RleMask& r, int height, int width);

std::string base64_encode(std::span<const uint8_t> bytes);
std::vector<uint8_t> base64_decode(std::string_view text);

// JSON-Lines record file. Line 1 = {"schema_version":1}; each further line
// is one SampleSet with masks/tokens as base64 little-endian f32. Floats
// round-trip within f32 representation; masks and RLE bit-exactly.
void write_records(const std::string& path, std::span<const SampleSet> sets);
std::vector<SampleSet> read_records(const std::string& path);

// Pull-style reader holding one line at a time; parse errors carry the line
// number and field path. An empty file yields no sets.
class RecordReader {
 public:
  explicit RecordReader(const std::string& path);
  ~RecordReader();
  RecordReader(const RecordReader&) = delete;
  RecordReader& operator=(const RecordReader&) = delete;

  // Fills `out` with the next set; false at end of file.
  bool next(SampleSet& out);

 private:
  struct Impl;
  Impl* impl_;
};

// Deterministic shortest-round-trip float formatting for CSV payloads.
std::string fmt_double(double v);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace usamkit
