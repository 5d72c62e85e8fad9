#include "rsvd/eval.hpp"

#include "rsvd/core.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

namespace rsvd::eval {

Scores score_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  Scores s;
  s.true_positive = tp;
  s.false_positive = fp;
  s.false_negative = fn;
  const std::int64_t predicted = tp + fp;
  const std::int64_t actual = tp + fn;
  if (predicted == 0 && actual == 0) {
    s.precision = s.recall = s.f1 = 1.0;
    return s;
  }
  s.precision = predicted > 0 ? double(tp) / double(predicted) : 0.0;
  s.recall = actual > 0 ? double(tp) / double(actual) : (predicted > 0 ? 1.0 : 0.0);
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

MaskMetrics evaluate_mask(const video::ForegroundMask& pred, const video::ForegroundMask& truth) {
  if (pred.height != truth.height || pred.width != truth.width || pred.frames != truth.frames ||
      pred.bits.rows() != truth.bits.rows() || pred.bits.cols() != truth.bits.cols())
    throw ContractError("evaluate_mask: prediction and truth dimensions differ");
  MaskMetrics m;
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (Index t = 0; t < pred.frames; ++t) {
    const auto p = pred.bits.col(t);
    const auto g = truth.bits.col(t);
    const std::int64_t ftp = (p && g).count();
    const std::int64_t ffp = (p && !g).count();
    const std::int64_t ffn = (!p && g).count();
    m.per_frame.push_back(score_counts(ftp, ffp, ffn));
    tp += ftp;
    fp += ffp;
    fn += ffn;
  }
  m.aggregate = score_counts(tp, fp, fn);
  return m;
}

Contamination parse_contamination(const std::string& name) {
  if (name == "none") return Contamination::none;
  if (name == "salt_pepper") return Contamination::salt_pepper;
  if (name == "cover") return Contamination::cover;
  if (name == "defocus_blur") return Contamination::defocus_blur;
  if (name == "gaussian_noise") return Contamination::gaussian_noise;
  if (name == "moved") return Contamination::moved;
  throw ContractError("unknown contamination type '" + name + "'");
}

std::string to_string(Contamination c) {
  switch (c) {
    case Contamination::none: return "none";
    case Contamination::salt_pepper: return "salt_pepper";
    case Contamination::cover: return "cover";
    case Contamination::defocus_blur: return "defocus_blur";
    case Contamination::gaussian_noise: return "gaussian_noise";
    case Contamination::moved: return "moved";
  }
  return "none";
}

void SynthSpec::validate() const {
  if (height < 1 || width < 1 || frames < 1) throw ContractError("synth: dimensions must be positive");
  if (background_rank < 1) throw ContractError("synth: background_rank must be positive");
  if (object_size < 0) throw ContractError("synth: object_size must be nonnegative");
  if (object_size > height || object_size > width) throw ContractError("synth: object larger than frame");
  if (object_size > 0 && (object_row < 0 || object_col < 0)) throw ContractError("synth: object start out of frame");
  if (contamination != Contamination::none && contamination_last >= contamination_first &&
      (contamination_first < 1 || contamination_last > frames))
    throw ContractError("synth: contamination frames must lie in [1, frames]");
  if (!(density >= 0.0 && density <= 1.0)) throw ContractError("synth: density must lie in [0, 1]");
  if (noise_sd < 0.0 || contamination_sd < 0.0) throw ContractError("synth: noise levels must be nonnegative");
  if (!(cover_fraction >= 0.0 && cover_fraction <= 1.0)) throw ContractError("synth: cover_fraction in [0, 1]");
  if (blur_radius < 0) throw ContractError("synth: blur_radius must be nonnegative");
}

namespace {

Index wrap(Index x, Index range) {
  const Index m = x % range;
  return m < 0 ? m + range : m;
}

Eigen::VectorXd box_blur(const Eigen::VectorXd& img, Index h, Index w, Index radius) {
  Eigen::VectorXd out(img.size());
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      double sum = 0.0;
      int count = 0;
      for (Index dr = -radius; dr <= radius; ++dr)
        for (Index dc = -radius; dc <= radius; ++dc) {
          const Index rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          sum += img(rr * w + cc);
          ++count;
        }
      out(r * w + c) = sum / count;
    }
  return out;
}

template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, 1> shift_right(const Eigen::Matrix<T, Eigen::Dynamic, 1>& img, Index h, Index w,
                                                Index shift) {
  Eigen::Matrix<T, Eigen::Dynamic, 1> out(img.size());
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) out(r * w + c) = img(r * w + std::clamp<Index>(c - shift, 0, w - 1));
  return out;
}

}  // namespace

SynthResult generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const Index h = spec.height, w = spec.width, p = spec.frames, hw = h * w;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Background basis images and per-frame coefficients.
  const double phase_x = 2.0 * std::numbers::pi * unit(rng);
  const double phase_y = 2.0 * std::numbers::pi * unit(rng);
  const double phase_t = 2.0 * std::numbers::pi * unit(rng);
  DataMatrix basis(hw, spec.background_rank);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c)
      basis(r * w + c, 0) = 0.35 + 0.3 * (0.5 + 0.5 * std::sin(c / 9.0 + phase_x) * std::cos(r / 13.0 + phase_y));
  std::vector<double> freq(static_cast<std::size_t>(spec.background_rank));
  std::vector<double> phase(static_cast<std::size_t>(spec.background_rank));
  for (Index k = 1; k < spec.background_rank; ++k) {
    const double fx = 2.0 * std::numbers::pi * (1.0 + unit(rng) * 3.0) / w;
    const double fy = 2.0 * std::numbers::pi * (1.0 + unit(rng) * 3.0) / h;
    const double px = 2.0 * std::numbers::pi * unit(rng);
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c) basis(r * w + c, k) = 0.08 * std::sin(fx * c + px) * std::cos(fy * r);
    freq[static_cast<std::size_t>(k)] = 0.1 + 0.4 * unit(rng);
    phase[static_cast<std::size_t>(k)] = 2.0 * std::numbers::pi * unit(rng);
  }
  DataMatrix coeff(spec.background_rank, p);
  for (Index t = 0; t < p; ++t) {
    coeff(0, t) = 1.0 + spec.illumination * std::sin(t / 5.0 + phase_t);
    for (Index k = 1; k < spec.background_rank; ++k)
      coeff(k, t) = std::sin(freq[static_cast<std::size_t>(k)] * t + phase[static_cast<std::size_t>(k)]);
  }

  SynthResult out;
  out.clean_background = basis * coeff;
  out.sequence.height = h;
  out.sequence.width = w;
  out.truth.height = h;
  out.truth.width = w;
  out.truth.frames = p;
  out.truth.bits = video::BoolMatrix::Constant(hw, p, false);
  out.contaminated.assign(static_cast<std::size_t>(p), false);

  const Index s = spec.object_size;
  for (Index t = 0; t < p; ++t) {
    Eigen::VectorXd frame = out.clean_background.col(t);
    Eigen::Matrix<bool, Eigen::Dynamic, 1> mask = Eigen::Matrix<bool, Eigen::Dynamic, 1>::Constant(hw, false);
    if (s > 0) {
      const Index r0 = wrap(spec.object_row + t * spec.velocity_row, h - s + 1);
      const Index c0 = wrap(spec.object_col + t * spec.velocity_col, w - s + 1);
      for (Index r = r0; r < r0 + s; ++r)
        for (Index c = c0; c < c0 + s; ++c) {
          frame(r * w + c) = spec.object_intensity;
          mask(r * w + c) = true;
        }
    }
    if (spec.noise_sd > 0.0)
      for (Index i = 0; i < hw; ++i) frame(i) += spec.noise_sd * normal(rng);

    const bool hit = spec.contamination != Contamination::none && t + 1 >= spec.contamination_first &&
                     t + 1 <= spec.contamination_last;
    if (hit) {
      out.contaminated[static_cast<std::size_t>(t)] = true;
      switch (spec.contamination) {
        case Contamination::salt_pepper:
          for (Index i = 0; i < hw; ++i) {
            const bool flip = unit(rng) < spec.density;
            const bool salt = unit(rng) < 0.5;
            if (flip) frame(i) = salt ? 1.0 : 0.0;
          }
          break;
        case Contamination::cover: {
          const Index bh = std::lround(spec.cover_fraction * h), bw = std::lround(spec.cover_fraction * w);
          for (Index r = 0; r < bh; ++r)
            for (Index c = 0; c < bw; ++c) frame(r * w + c) = spec.cover_value;
          break;
        }
        case Contamination::defocus_blur:
          frame = box_blur(frame, h, w, spec.blur_radius);
          break;
        case Contamination::gaussian_noise:
          for (Index i = 0; i < hw; ++i) frame(i) += spec.contamination_sd * normal(rng);
          break;
        case Contamination::moved:
          frame = shift_right(frame, h, w, spec.shift);
          mask = shift_right(mask, h, w, spec.shift);
          // Replicated edge columns are not object pixels.
          for (Index r = 0; r < h; ++r)
            for (Index c = 0; c < std::min(spec.shift, w); ++c) mask(r * w + c) = false;
          break;
        case Contamination::none:
          break;
      }
    }
    out.sequence.frames.push_back(frame.cwiseMax(0.0).cwiseMin(1.0));
    out.truth.bits.col(t) = mask.array();
  }
  return out;
}

ConsistencyReport consistency_experiment(const std::vector<Index>& sizes, Index replications, std::uint64_t seed,
                                         const ConsistencyOptions& options) {
  if (replications < 30) throw ContractError("consistency_experiment: need at least 30 replications");
  for (Index n : sizes)
    if (n < 10) throw ContractError("consistency_experiment: sizes must be at least 10");

  ConsistencyReport report;
  report.replications = replications;
  report.alpha = options.alpha;
  report.seed = seed;
  report.noise_scale = options.noise_scale;

  RSvdConfig cfg;
  cfg.alpha = options.alpha;
  cfg.rank = 3;
  cfg.tol = options.tol;
  cfg.max_iter = options.max_iter;

  for (Index n : sizes) {
    std::seed_seq lseed{seed, static_cast<std::uint64_t>(n), std::uint64_t{0}};
    std::mt19937_64 lrng(lseed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto gaussian = [&](Index rows, Index cols) {
      DataMatrix g(rows, cols);
      for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) g(i, j) = normal(lrng);
      return g;
    };
    const DataMatrix left = Eigen::HouseholderQR<DataMatrix>(gaussian(n, 3)).householderQ() * DataMatrix::Identity(n, 3);
    const DataMatrix right = Eigen::HouseholderQR<DataMatrix>(gaussian(n, 3)).householderQ() * DataMatrix::Identity(n, 3);
    const Eigen::Vector3d spectrum = double(n) * Eigen::Vector3d(3.0, 2.0, 1.0);
    const DataMatrix L = left * spectrum.asDiagonal() * right.transpose();

    ConsistencyCell cell;
    cell.n = n;
    cell.true_lambda = spectrum(0);
    cell.replications = replications;
    cell.estimates.assign(static_cast<std::size_t>(replications), 0.0);
    std::vector<char> converged(static_cast<std::size_t>(replications), 1);
    const double sd = options.noise_scale / double(n);

    parallel_for(
        static_cast<std::size_t>(replications),
        [&](std::size_t rep) {
          std::seed_seq eseed{seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep + 1)};
          std::mt19937_64 erng(eseed);
          std::normal_distribution<double> enormal(0.0, 1.0);
          DataMatrix X = L;
          if (sd > 0.0)
            for (Index j = 0; j < n; ++j)
              for (Index i = 0; i < n; ++i) X(i, j) += sd * enormal(erng);
          const auto model = rsvd_dpd<double>(X, cfg);
          cell.estimates[rep] = model.triples.front().lambda;
          converged[rep] = model.all_converged() ? 1 : 0;
        },
        options.threads);

    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t rep = 0; rep < cell.estimates.size(); ++rep) {
      const double err = cell.estimates[rep] - cell.true_lambda;
      sum += err;
      sum_sq += err * err;
      if (!converged[rep]) ++cell.nonconverged;
    }
    cell.bias = sum / double(replications);
    cell.rmse = std::sqrt(sum_sq / double(replications));
    report.cells.push_back(std::move(cell));
  }
  return report;
}

namespace {

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = xs.size() > 1 ? std::sqrt(var / double(xs.size() - 1)) : 0.0;
  return {mean, sd};
}

}  // namespace

std::vector<TimingRow> timing_benchmark(const std::vector<std::pair<Index, Index>>& sizes, double alpha, Index rank,
                                        int runs, int iterations, std::uint64_t seed) {
  if (runs < 1 || iterations < 1) throw ContractError("timing_benchmark: runs and iterations must be positive");
  using clock = std::chrono::steady_clock;
  std::vector<TimingRow> rows;
  for (const auto& [n, p] : sizes) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    DataMatrix X(n, p);
    for (Index j = 0; j < p; ++j)
      for (Index i = 0; i < n; ++i) X(i, j) = unit(rng);

    RSvdConfig cfg;
    cfg.alpha = alpha;
    cfg.rank = rank;

    std::vector<double> per_frame;
    std::vector<double> per_iteration;
    volatile double sink = 0.0;  // keeps the timed work observable
    for (int run = 0; run < runs; ++run) {
      const auto t0 = clock::now();
      const auto model = rsvd_dpd<double>(X, cfg);
      const auto t1 = clock::now();
      sink = sink + model.sigma2;
      per_frame.push_back(std::chrono::duration<double>(t1 - t0).count() / double(p));

      RankOneState<double> state = initial_state<double>(X, cfg);
      const auto t2 = clock::now();
      for (int it = 0; it < iterations; ++it) {
        dpd_step<double>(X, state, alpha, cfg.sigma2_floor);
        sink = sink + detail::objective_at<double>(X, (state.lambda * state.u).eval(), state.v, state.sigma2, alpha);
      }
      const auto t3 = clock::now();
      per_iteration.push_back(std::chrono::duration<double>(t3 - t2).count() / double(iterations));
    }
    TimingRow row;
    row.rows = n;
    row.cols = p;
    row.runs = runs;
    row.iterations = iterations;
    std::tie(row.seconds_per_frame_mean, row.seconds_per_frame_sd) = mean_sd(per_frame);
    std::tie(row.seconds_per_iteration_mean, row.seconds_per_iteration_sd) = mean_sd(per_iteration);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rsvd::eval
