#pragma once

#include <string>
#include <vector>

#include "usamkit/mask.hpp"
#include "usamkit/sampling.hpp"

namespace usamkit {

// One backend forward slice: config coordinates, probability mask (always in
// GT frame: flips are inverted before storage), SamScore, token vector.
struct SampleRecord {
  SampleConfig config;
  ProbMask mask;
  double sam_score = 0.0;
  std::vector<double> tokens;
};

// Grid layouts produced by the generator. Full = the complete
// (aug x prompt x model x head) enumeration plus refined-prompt records;
// Train = identity augmentation only, centroid + refined prompts, all models
// (exactly what head training consumes).
enum class GridKind { Full, Train };
const char* grid_name(GridKind kind);

struct SampleSet {
  std::string image_id;
  BinaryMask gt;
  int n_prompts = 0;
  // Hand-built record lists for oracle tests; bypasses full-grid
  // preconditions in the entropy estimators.
  bool degenerate = false;
  std::vector<SampleRecord> records;
};

}  // namespace usamkit
