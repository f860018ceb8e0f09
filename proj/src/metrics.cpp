#include "fusionnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "fusionnet/augmentation.hpp"

namespace fusionnet {

Mask threshold(const Image& prob, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("threshold: t must lie in [0, 1]");
  Mask out(prob.height, prob.width);
  for (std::size_t i = 0; i < prob.size(); ++i) out.values[i] = prob.values[i] >= t ? 1 : 0;
  return out;
}

Mask invert(const Mask& mask) {
  Mask out = mask;
  for (auto& v : out.values) v = v ? 0 : 1;
  return out;
}

Image median_filter(const Image& prob, int radius) {
  if (radius < 0) throw std::invalid_argument("median_filter: negative radius");
  if (radius == 0 || prob.size() == 0) return prob;
  Image out(prob.height, prob.width);
  std::vector<float> window;
  window.reserve(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)));
  for (int y = 0; y < prob.height; ++y) {
    for (int x = 0; x < prob.width; ++x) {
      window.clear();
      for (int dy = -radius; dy <= radius; ++dy) {
        const int sy = reflect_index(y + dy, prob.height);
        for (int dx = -radius; dx <= radius; ++dx) window.push_back(prob(sy, reflect_index(x + dx, prob.width)));
      }
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      out(y, x) = *mid;
    }
  }
  return out;
}

Labeling connected_components(const Mask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw std::invalid_argument("connectivity must be 4 or 8");
  static constexpr int kOffsets[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  Labeling labels(mask.height, mask.width, 0);
  std::int32_t next = 0;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask(y, x) || labels(y, x) != 0) continue;
      labels(y, x) = ++next;
      queue.emplace_back(y, x);
      while (!queue.empty()) {
        const auto [cy, cx] = queue.front();
        queue.pop_front();
        for (int k = 0; k < connectivity; ++k) {
          const int ny = cy + kOffsets[k][0];
          const int nx = cx + kOffsets[k][1];
          if (ny < 0 || nx < 0 || ny >= mask.height || nx >= mask.width) continue;
          if (mask(ny, nx) && labels(ny, nx) == 0) {
            labels(ny, nx) = next;
            queue.emplace_back(ny, nx);
          }
        }
      }
    }
  }
  return labels;
}

Labeling thin_boundaries(const Labeling& labels) {
  Labeling out = labels;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      if (out(y, x) != 0) continue;
      std::int32_t id = 0;
      bool unique = true;
      auto visit = [&](int ny, int nx) {
        if (ny < 0 || nx < 0 || ny >= out.height || nx >= out.width) return;
        const std::int32_t n = out(ny, nx);
        if (n == 0) return;
        if (id == 0) id = n;
        else if (n != id) unique = false;
      };
      visit(y - 1, x);
      visit(y + 1, x);
      visit(y, x - 1);
      visit(y, x + 1);
      if (id != 0 && unique) out(y, x) = id;
    }
  }
  return out;
}

Mask border_thin(const Mask& boundary) {
  const Labeling thinned = thin_boundaries(connected_components(invert(boundary), 4));
  Mask out(boundary.height, boundary.width);
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = thinned.values[i] == 0 ? 1 : 0;
  return out;
}

ContingencyTable ContingencyTable::build(const Labeling& pred, const Labeling& truth) {
  require_same_size(pred, truth, "contingency table");
  ContingencyTable table;
  std::int64_t singleton = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::int32_t t = truth.values[i];
    if (t <= 0) continue;
    const std::int64_t p = pred.values[i] > 0 ? pred.values[i] : --singleton;
    ++table.counts[{p, t}];
    ++table.pred_sizes[p];
    ++table.truth_sizes[t];
    ++table.total;
  }
  return table;
}

double rand_fscore(const ContingencyTable& table) {
  if (table.total == 0) return 1.0;
  auto sum_squares = [](const auto& m) {
    double s = 0.0;
    for (const auto& [key, n] : m) s += static_cast<double>(n) * static_cast<double>(n);
    return s;
  };
  const double joint = sum_squares(table.counts);
  return joint / (0.5 * sum_squares(table.pred_sizes) + 0.5 * sum_squares(table.truth_sizes));
}

double rand_fscore(const Labeling& pred, const Labeling& truth) {
  return rand_fscore(ContingencyTable::build(pred, truth));
}

double info_fscore(const ContingencyTable& table) {
  if (table.total == 0) return 1.0;
  const double n = static_cast<double>(table.total);
  auto entropy = [n](const auto& m) {
    double h = 0.0;
    for (const auto& [key, c] : m) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
    return h;
  };
  const double hs = entropy(table.pred_sizes);
  const double ht = entropy(table.truth_sizes);
  if (hs + ht <= 0.0) return 1.0;
  double mutual = 0.0;
  for (const auto& [key, c] : table.counts) {
    const double pij = static_cast<double>(c) / n;
    const double si = static_cast<double>(table.pred_sizes.at(key.first)) / n;
    const double tj = static_cast<double>(table.truth_sizes.at(key.second)) / n;
    mutual += pij * std::log(pij / (si * tj));
  }
  return std::clamp(mutual / (0.5 * hs + 0.5 * ht), 0.0, 1.0);
}

double info_fscore(const Labeling& pred, const Labeling& truth) {
  return info_fscore(ContingencyTable::build(pred, truth));
}

double dice(const Mask& pred, const Mask& truth) {
  require_same_size(pred, truth, "dice");
  std::int64_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.values[i] != 0;
    const bool t = truth.values[i] != 0;
    a += p;
    b += t;
    both += p && t;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

Labeling labels_from_boundary(const Image& boundary_label) {
  return connected_components(invert(threshold(boundary_label, 0.5)), 4);
}

ScoreReport evaluate(const Image& prob_map, const Labeling& truth, const EvalConfig& config) {
  require_same_size(prob_map, truth, "evaluate");
  const Image filtered = median_filter(prob_map, config.median_radius);
  const Mask foreground = invert(threshold(filtered, config.threshold));
  Labeling pred = connected_components(foreground, 4);
  Labeling reference = truth;
  if (config.border_thinning) {
    pred = thin_boundaries(pred);
    reference = thin_boundaries(reference);
  }
  const ContingencyTable table = ContingencyTable::build(pred, reference);

  Mask truth_foreground(truth.height, truth.width);
  for (std::size_t i = 0; i < truth.size(); ++i) truth_foreground.values[i] = truth.values[i] > 0 ? 1 : 0;

  ScoreReport report;
  report.v_rand = rand_fscore(table);
  report.v_info = info_fscore(table);
  report.v_dice = dice(foreground, truth_foreground);
  report.evaluated_pixels = table.total;
  report.total_pixels = static_cast<std::int64_t>(truth.size());
  return report;
}

}  // namespace fusionnet
