#include "structkit/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "structkit/losses.hpp"
#include "structkit/rng.hpp"

namespace structkit {

std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points, std::size_t k, std::size_t start) {
  const std::size_t n = points.size();
  if (k > n) throw std::invalid_argument("farthest_point_sampling: k exceeds the number of points");
  if (k == 0) return {};
  if (start >= n) throw std::invalid_argument("farthest_point_sampling: start index out of range");
  std::vector<std::size_t> chosen{start};
  chosen.reserve(k);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t last = start;
  while (chosen.size() < k) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], (points[i] - points[last]).squaredNorm());
      if (dist[i] > best_d) {
        best_d = dist[i];
        best = i;
      }
    }
    chosen.push_back(best);
    last = best;
  }
  return chosen;
}

PointCloud shape_to_pointcloud(std::span<const OrientedBox> boxes, std::size_t per_box, std::size_t final_count,
                               std::uint64_t seed) {
  if (boxes.empty()) throw std::invalid_argument("shape_to_pointcloud: no boxes");
  if (per_box == 0) throw std::invalid_argument("shape_to_pointcloud: per_box must be positive");
  struct Tagged {
    Vec3 p;
    std::size_t part;
  };
  std::vector<Tagged> pool;
  pool.reserve(boxes.size() * per_box);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (const auto& p : sample_box_surface(boxes[i], per_box, derive_seed(seed, i))) pool.push_back({p, i});
  }
  std::stable_sort(pool.begin(), pool.end(), [](const Tagged& a, const Tagged& b) {
    return std::lexicographical_compare(a.p.data(), a.p.data() + 3, b.p.data(), b.p.data() + 3);
  });
  std::vector<Vec3> pts;
  pts.reserve(pool.size());
  for (const auto& t : pool) pts.push_back(t.p);
  const auto idx = farthest_point_sampling(pts, std::min(final_count, pts.size()), 0);
  PointCloud out;
  out.part_counts.assign(boxes.size(), 0);
  for (std::size_t i : idx) {
    out.points.push_back(pts[i]);
    ++out.part_counts[pool[i].part];
  }
  return out;
}

namespace {

Eigen::MatrixXd distance_matrix(std::span<const Vec3> a, std::span<const Vec3> b) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (a[i] - b[j]).norm();
    }
  }
  return c;
}

void check_sizes(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.size() != b.size()) throw std::invalid_argument("EMD needs clouds of equal size");
}

}  // namespace

double emd_exact(std::span<const Vec3> a, std::span<const Vec3> b) {
  check_sizes(a, b);
  const std::size_t n = a.size();
  if (n == 0) return 0.0;
  if (n > kMaxExactEmdPoints) throw std::invalid_argument("emd_exact supports at most 512 points");
  const Eigen::MatrixXd cost = distance_matrix(a, b);
  // shortest augmenting path with row/column potentials, 1-based
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    total += cost(static_cast<Eigen::Index>(match[j] - 1), static_cast<Eigen::Index>(j - 1));
  }
  return total / static_cast<double>(n);
}

double emd_approx(std::span<const Vec3> a, std::span<const Vec3> b, int iterations) {
  check_sizes(a, b);
  const std::size_t n = a.size();
  if (n == 0) return 0.0;
  if (iterations < 1) throw std::invalid_argument("emd_approx needs at least one phase");
  const Eigen::MatrixXd cost = distance_matrix(a, b);
  if (n == 1) return cost(0, 0);
  const double max_cost = cost.maxCoeff();
  if (max_cost == 0.0) return 0.0;
  std::vector<double> price(n, 0.0);
  std::vector<std::size_t> owner(n), assigned(n);
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  double best = std::numeric_limits<double>::infinity();
  double eps = 0.5 * max_cost;
  for (int phase = 0; phase < iterations; ++phase, eps /= 4.0) {
    std::fill(owner.begin(), owner.end(), kNone);
    std::fill(assigned.begin(), assigned.end(), kNone);
    std::vector<std::size_t> queue(n);
    std::iota(queue.begin(), queue.end(), std::size_t{0});
    while (!queue.empty()) {
      const std::size_t i = queue.back();
      queue.pop_back();
      // best and second-best net value −c_ij − p_j
      double v1 = -std::numeric_limits<double>::infinity();
      double v2 = v1;
      std::size_t j1 = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double val = -cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - price[j];
        if (val > v1) {
          v2 = v1;
          v1 = val;
          j1 = j;
        } else if (val > v2) {
          v2 = val;
        }
      }
      price[j1] += (v1 - v2) + eps;
      if (owner[j1] != kNone) {
        assigned[owner[j1]] = kNone;
        queue.push_back(owner[j1]);
      }
      owner[j1] = i;
      assigned[i] = j1;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(assigned[i]));
    }
    best = std::min(best, total / static_cast<double>(n));
  }
  return best;
}

std::vector<Vec3> align_centroid(std::span<const Vec3> points, std::span<const Vec3> target) {
  Vec3 cp = Vec3::Zero(), ct = Vec3::Zero();
  for (const auto& p : points) cp += p;
  for (const auto& p : target) ct += p;
  const Vec3 shift = ct / static_cast<double>(std::max<std::size_t>(1, target.size())) -
                     cp / static_cast<double>(std::max<std::size_t>(1, points.size()));
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p + shift);
  return out;
}

ShapeMetrics evaluate_shape(std::span<const OrientedBox> pred, std::span<const OrientedBox> gt,
                            const EvalConfig& cfg) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw std::invalid_argument("evaluate_shape: predicted and ground-truth part counts differ");
  }
  const auto emd = [&](std::span<const Vec3> x, std::span<const Vec3> y) {
    return x.size() <= kMaxExactEmdPoints ? emd_exact(x, y) : emd_approx(x, y, cfg.approx_iterations);
  };
  const PointCloud pc = shape_to_pointcloud(pred, cfg.per_box, cfg.points, cfg.seed);
  const PointCloud gc = shape_to_pointcloud(gt, cfg.per_box, cfg.points, cfg.seed);
  ShapeMetrics m;
  m.emd_raw = emd(pc.points, gc.points);
  m.emd_aligned = emd(align_centroid(pc.points, gc.points), gc.points);

  Vec3 pred_mean = Vec3::Zero(), gt_mean = Vec3::Zero();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred_mean += pred[i].center;
    gt_mean += gt[i].center;
  }
  const Vec3 shift = (gt_mean - pred_mean) / static_cast<double>(pred.size());
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    OrientedBox moved = pred[i];
    moved.center += shift;
    m.chamfer += chamfer_box_distance(moved, gt[i]) / n;
    m.position_l1 += l1_vector_error(moved.center, gt[i].center) / n;
    const Mat3 rg = gt[i].rotation_matrix().matrix();
    const auto set = equivalence_set(RotationMatrix::unchecked(rg), cfg.mode);
    const Mat3 rp = pred[i].rotation_matrix().matrix();
    m.geodesic += geodesic_error(rp, set) / n;
    // G = R_gtᵀ·element maps ground-truth axes onto the predicted ones
    const Mat3 g = (rg.transpose() * set.elements[nearest_equivalent(rp, set)]).array().abs().round().matrix();
    m.size_l1 += l1_vector_error(pred[i].size, g.transpose() * gt[i].size) / n;
  }
  return m;
}

namespace {

void accumulate(ShapeMetrics& acc, const ShapeMetrics& m) {
  acc.emd_aligned += m.emd_aligned;
  acc.emd_raw += m.emd_raw;
  acc.chamfer += m.chamfer;
  acc.geodesic += m.geodesic;
  acc.size_l1 += m.size_l1;
  acc.position_l1 += m.position_l1;
}

void finish(MetricRow& row) {
  if (row.count == 0) return;
  const double c = static_cast<double>(row.count);
  auto& m = row.mean;
  for (double* x : {&m.emd_aligned, &m.emd_raw, &m.chamfer, &m.geodesic, &m.size_l1, &m.position_l1}) *x /= c;
}

}  // namespace

MetricReport evaluate_dataset(std::span<const EvalSample> samples, const EvalConfig& cfg) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return samples[x].id < samples[y].id;
  });
  std::vector<ShapeMetrics> results(samples.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t k = next++; k < order.size(); k = next++) {
      try {
        const auto& s = samples[order[k]];
        results[k] = evaluate_shape(s.pred, s.gt, cfg);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, cfg.jobs);
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  MetricReport report;
  report.config = cfg;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& row = report.categories[samples[order[k]].category];
    ++row.count;
    accumulate(row.mean, results[k]);
    ++report.overall.count;
    accumulate(report.overall.mean, results[k]);
  }
  for (auto& [name, row] : report.categories) finish(row);
  finish(report.overall);
  return report;
}

std::string format_report_table(const MetricReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %6s %10s %10s %10s %10s %10s %10s\n", "category", "n", "EMD", "EMD(raw)",
                "Chamfer", "Geo(deg)", "SizeL1", "PosL1");
  out += line;
  const auto row = [&](const std::string& name, const MetricRow& r) {
    const auto& m = r.mean;
    std::snprintf(line, sizeof line, "%-12s %6zu %10.5f %10.5f %10.5f %10.3f %10.5f %10.5f\n", name.c_str(), r.count,
                  m.emd_aligned, m.emd_raw, m.chamfer, m.geodesic, m.size_l1, m.position_l1);
    out += line;
  };
  for (const auto& [name, r] : report.categories) row(name, r);
  row("overall", report.overall);
  return out;
}

}  // namespace structkit
