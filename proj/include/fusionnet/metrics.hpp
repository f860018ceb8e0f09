#pragma once

#include <cstdint>
#include <map>
#include <utility>

#include "fusionnet/image.hpp"

namespace fusionnet {

/// 1 where prob >= t, else 0.
Mask threshold(const Image& prob, double t);

Mask invert(const Mask& mask);

/// Median over each (2r+1)^2 neighbourhood, mirror-reflected at the edges.
Image median_filter(const Image& prob, int radius);

/// Components of the 1-pixels; ids 1, 2, ... in raster-scan discovery order.
/// `connectivity` is 4 or 8.
Labeling connected_components(const Mask& mask, int connectivity = 4);

/// Single raster pass that hands each boundary (id 0) pixel to its neighbouring
/// component when every labelled 4-neighbour carries the same id. Components
/// never merge, so their count is unchanged.
Labeling thin_boundaries(const Labeling& labels);

/// Boundary-mask form of thin_boundaries (boundary = 1).
Mask border_thin(const Mask& boundary);

/// Joint counts over pixels with truth id > 0. Prediction pixels with id 0 are
/// counted as singleton segments.
struct ContingencyTable {
  std::map<std::pair<std::int64_t, std::int32_t>, std::int64_t> counts;  // (pred, truth) -> n_ij
  std::map<std::int64_t, std::int64_t> pred_sizes;                       // s_i
  std::map<std::int32_t, std::int64_t> truth_sizes;                      // t_j
  std::int64_t total = 0;

  static ContingencyTable build(const Labeling& pred, const Labeling& truth);
};

/// V_rand = sum n_ij^2 / (sum s_i^2 / 2 + sum t_j^2 / 2). 1 when nothing is evaluated.
double rand_fscore(const ContingencyTable& table);
double rand_fscore(const Labeling& pred, const Labeling& truth);

/// V_info = I(S;T) / (H(S) / 2 + H(T) / 2), natural logarithms. 1 when both
/// entropies vanish or nothing is evaluated.
double info_fscore(const ContingencyTable& table);
double info_fscore(const Labeling& pred, const Labeling& truth);

/// 2|A ∩ B| / (|A| + |B|); 1 when both masks are empty.
double dice(const Mask& pred, const Mask& truth);

struct EvalConfig {
  double threshold = 0.5;
  int median_radius = 2;
  bool border_thinning = true;
};

struct ScoreReport {
  double v_rand = 0.0;
  double v_info = 0.0;
  double v_dice = 0.0;
  std::int64_t evaluated_pixels = 0;
  std::int64_t total_pixels = 0;
};

/// Labelling of a binary boundary label image (1 = boundary): components of the
/// non-boundary pixels.
Labeling labels_from_boundary(const Image& boundary_label);

/// Boundary probability map against a truth labelling: optional median filter,
/// threshold, invert to foreground, connected components, optional border
/// thinning of both labellings, then V_rand / V_info over truth foreground.
/// V_dice compares the unthinned foreground masks.
ScoreReport evaluate(const Image& prob_map, const Labeling& truth, const EvalConfig& config = {});

}  // namespace fusionnet
