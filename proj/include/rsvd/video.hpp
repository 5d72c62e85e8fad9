#ifndef RSVD_VIDEO_HPP
#define RSVD_VIDEO_HPP

// Background modelling pipeline: frames are flattened into the columns of
// an (h*w) x p matrix, the robust low-rank fit is the background, and
// thresholded residuals are the foreground mask.

#include "rsvd/select.hpp"
#include "rsvd/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rsvd::video {

namespace fs = std::filesystem;

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Grayscale raster: pixels in row-major order, intensities in [0, 1].
struct Image {
  Index height = 0;
  Index width = 0;
  Eigen::VectorXd pixels;
};

struct FrameSequence {
  Index height = 0;
  Index width = 0;
  std::vector<Eigen::VectorXd> frames;

  Index size() const { return static_cast<Index>(frames.size()); }
  // Throws FormatError on inconsistent frame sizes or non-finite values.
  // Intensities outside [0, 1] are accepted.
  void validate() const;
};

/// bits is (h*w) x p, laid out like the matricized data; true = foreground.
struct ForegroundMask {
  Index height = 0;
  Index width = 0;
  Index frames = 0;
  BoolMatrix bits;

  bool at(Index frame, Index row, Index col) const { return bits(row * width + col, frame); }
};

struct BackgroundModel {
  RSvdModel<double> model;
  Index height = 0;
  Index width = 0;
  Index frames = 0;
  DataMatrix background;
  std::optional<RankSelection> rank_selection;
};

struct ForegroundResult {
  DataMatrix residuals;
  ForegroundMask mask;
};

DataMatrix matricize(const FrameSequence& seq);
FrameSequence devectorize(const DataMatrix& X, Index height, Index width);

/// Robust background of the sequence. Without an explicit rank, the rank is
/// chosen by select_rank(X, epsilon). The background is not clamped.
BackgroundModel model_background(const FrameSequence& seq, double alpha, std::optional<Index> rank = std::nullopt,
                                 double epsilon = 0.1, const RSvdConfig& base = {});

/// Same, from an already matricized (h*w) x p matrix.
BackgroundModel model_background(const DataMatrix& X, Index height, Index width, double alpha,
                                 std::optional<Index> rank = std::nullopt, double epsilon = 0.1,
                                 const RSvdConfig& base = {});

/// Residuals X - background and the mask |residual| > k_sigma * sqrt(sigma2).
ForegroundResult extract_foreground(const FrameSequence& seq, const BackgroundModel& bg, double k_sigma = 3.0);
ForegroundResult extract_foreground(const DataMatrix& X, const BackgroundModel& bg, double k_sigma = 3.0);

ForegroundMask threshold_residuals(const DataMatrix& residuals, Index height, Index width, double threshold);

// ---- PNM frame files ------------------------------------------------------

/// Reads P2/P5 (gray) or P3/P6 (color, converted with Rec. 601 luma).
/// Values are divided by maxval.
Image decode_pnm(std::string_view bytes);
Image read_pnm(const fs::path& path);

/// Binary P5 with maxval 255; each value is round(255 * clamp(x, 0, 1)).
std::string encode_pgm(Index height, Index width, const Eigen::VectorXd& pixels);
void write_pgm(const fs::path& path, Index height, Index width, const Eigen::VectorXd& pixels);

/// Frame files (*.pgm, *.ppm, *.pnm) in lexicographic filename order.
std::vector<fs::path> list_frames(const fs::path& dir);
FrameSequence read_frame_directory(const fs::path& dir);
FrameSequence read_frames(const std::vector<fs::path>& files);

/// Writes frame_0000.pgm, frame_0001.pgm, ... starting at `first_index`.
void write_frames(const fs::path& dir, const FrameSequence& seq, Index first_index = 0,
                  const std::string& prefix = "frame_");
std::string frame_name(const std::string& prefix, Index index);

ForegroundMask mask_from_frames(const FrameSequence& seq);  // pixel > 0.5 is foreground
FrameSequence mask_to_frames(const ForegroundMask& mask);

}  // namespace rsvd::video

#endif  // RSVD_VIDEO_HPP
