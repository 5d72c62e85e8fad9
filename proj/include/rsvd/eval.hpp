#ifndef RSVD_EVAL_HPP
#define RSVD_EVAL_HPP

// Mask scoring, seeded synthetic videos, and the desk-scale experiments
// (consistency of the first singular value, per-frame timing).

#include "rsvd/parallel.hpp"
#include "rsvd/types.hpp"
#include "rsvd/video.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace rsvd::eval {

struct Scores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t true_positive = 0;
  std::int64_t false_positive = 0;
  std::int64_t false_negative = 0;
};

/// Precision / recall / F1 from counts. An empty prediction scores 0 when
/// the truth is nonempty; both empty scores 1 across the board.
Scores score_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn);

struct MaskMetrics {
  std::vector<Scores> per_frame;
  Scores aggregate;  // pixels pooled over all frames
};

MaskMetrics evaluate_mask(const video::ForegroundMask& pred, const video::ForegroundMask& truth);

enum class Contamination { none, salt_pepper, cover, defocus_blur, gaussian_noise, moved };

Contamination parse_contamination(const std::string& name);
std::string to_string(Contamination c);

struct SynthSpec {
  Index height = 64;
  Index width = 64;
  Index frames = 40;
  Index background_rank = 1;
  // Relative per-frame illumination swing of the leading background image;
  // 0 gives a static background when background_rank == 1.
  double illumination = 0.05;

  Index object_size = 7;  // 0 disables the moving object
  double object_intensity = 0.9;
  Index object_row = 0;
  Index object_col = 0;
  Index velocity_row = 1;
  Index velocity_col = 0;

  double noise_sd = 0.0;  // sensor noise on every frame

  Contamination contamination = Contamination::none;
  Index contamination_first = 1;  // 1-based, inclusive
  Index contamination_last = 0;
  double density = 0.1;          // salt_pepper
  double contamination_sd = 0.1;  // gaussian_noise
  double cover_fraction = 0.5;    // cover: side of the overwritten block
  double cover_value = 0.0;
  Index blur_radius = 2;          // defocus_blur: box filter half width
  Index shift = 4;                // moved: horizontal frame shift in pixels

  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthResult {
  video::FrameSequence sequence;
  video::ForegroundMask truth;  // object footprint only
  DataMatrix clean_background;  // (h*w) x p, before object and contamination
  std::vector<bool> contaminated;
};

SynthResult generate_synthetic(const SynthSpec& spec);

struct ConsistencyCell {
  Index n = 0;
  double true_lambda = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  Index replications = 0;
  Index nonconverged = 0;
  std::vector<double> estimates;
};

struct ConsistencyReport {
  std::vector<ConsistencyCell> cells;
  Index replications = 0;
  double alpha = 0.5;
  std::uint64_t seed = 0;
  double noise_scale = 1.0;
};

struct ConsistencyOptions {
  double alpha = 0.5;
  // Multiplies the 1/n noise standard deviation; 0 gives noiseless data.
  double noise_scale = 1.0;
  double tol = 1e-10;
  int max_iter = 500;
  unsigned threads = worker_count();
};

/// n x n matrices L + E, L of rank three with singular values n * (3, 2, 1)
/// and seeded orthonormal factors, E i.i.d. normal with sd 1/n. Records the
/// bias and RMSE of the robust first singular value against 3n.
ConsistencyReport consistency_experiment(const std::vector<Index>& sizes, Index replications, std::uint64_t seed,
                                         const ConsistencyOptions& options = {});

struct TimingRow {
  Index rows = 0;
  Index cols = 0;
  int runs = 0;
  int iterations = 0;
  double seconds_per_frame_mean = 0.0;
  double seconds_per_frame_sd = 0.0;
  double seconds_per_iteration_mean = 0.0;
  double seconds_per_iteration_sd = 0.0;
};

/// Wall-clock cost on seeded uniform matrices. Per-frame time is a full
/// rsvd_dpd fit divided by the column count; per-iteration time is the
/// mean over `iterations` fixed-point sweeps.
std::vector<TimingRow> timing_benchmark(const std::vector<std::pair<Index, Index>>& sizes, double alpha, Index rank,
                                        int runs = 5, int iterations = 10, std::uint64_t seed = 1);

}  // namespace rsvd::eval

#endif  // RSVD_EVAL_HPP
