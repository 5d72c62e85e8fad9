#include "rsvd/video.hpp"

#include "rsvd/core.hpp"
#include "rsvd/matrix_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace rsvd::video {

void FrameSequence::validate() const {
  if (height < 1 || width < 1) throw FormatError("frame sequence: non-positive frame dimensions");
  const Index pixels = height * width;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].size() != pixels)
      throw FormatError("frame " + std::to_string(i) + " has " + std::to_string(frames[i].size()) +
                        " pixels, expected " + std::to_string(pixels));
    if (!frames[i].allFinite()) throw FormatError("frame " + std::to_string(i) + " has non-finite values");
  }
}

DataMatrix matricize(const FrameSequence& seq) {
  seq.validate();
  if (seq.size() < 2) throw ContractError("matricize: need at least 2 frames");
  DataMatrix X(seq.height * seq.width, seq.size());
  for (Index i = 0; i < seq.size(); ++i) X.col(i) = seq.frames[static_cast<std::size_t>(i)];
  return X;
}

FrameSequence devectorize(const DataMatrix& X, Index height, Index width) {
  if (height * width != X.rows())
    throw ContractError("devectorize: " + std::to_string(height) + "x" + std::to_string(width) +
                        " frames do not match " + std::to_string(X.rows()) + " rows");
  FrameSequence seq;
  seq.height = height;
  seq.width = width;
  seq.frames.reserve(static_cast<std::size_t>(X.cols()));
  for (Index i = 0; i < X.cols(); ++i) seq.frames.emplace_back(X.col(i));
  return seq;
}

BackgroundModel model_background(const DataMatrix& X, Index height, Index width, double alpha,
                                 std::optional<Index> rank, double epsilon, const RSvdConfig& base) {
  if (height * width != X.rows()) throw ContractError("model_background: frame size does not match matrix rows");
  BackgroundModel bg;
  bg.height = height;
  bg.width = width;
  bg.frames = X.cols();
  if (!rank) {
    bg.rank_selection = select_rank(X, epsilon);
    rank = bg.rank_selection->chosen_rank;
  }
  RSvdConfig cfg = base;
  cfg.alpha = alpha;
  cfg.rank = *rank;
  bg.model = rsvd_dpd(X, cfg);
  bg.background = bg.model.reconstruct();
  return bg;
}

BackgroundModel model_background(const FrameSequence& seq, double alpha, std::optional<Index> rank, double epsilon,
                                 const RSvdConfig& base) {
  return model_background(matricize(seq), seq.height, seq.width, alpha, rank, epsilon, base);
}

ForegroundMask threshold_residuals(const DataMatrix& residuals, Index height, Index width, double threshold) {
  if (height * width != residuals.rows()) throw ContractError("threshold_residuals: dimension mismatch");
  ForegroundMask mask;
  mask.height = height;
  mask.width = width;
  mask.frames = residuals.cols();
  mask.bits = residuals.array().abs() > threshold;
  return mask;
}

ForegroundResult extract_foreground(const DataMatrix& X, const BackgroundModel& bg, double k_sigma) {
  if (!(k_sigma > 0.0)) throw DomainError("extract_foreground: k_sigma must be positive");
  if (X.rows() != bg.background.rows() || X.cols() != bg.background.cols())
    throw ContractError("extract_foreground: sequence and background dimensions differ");
  ForegroundResult out;
  out.residuals = X - bg.background;
  out.mask = threshold_residuals(out.residuals, bg.height, bg.width, k_sigma * std::sqrt(bg.model.sigma2));
  return out;
}

ForegroundResult extract_foreground(const FrameSequence& seq, const BackgroundModel& bg, double k_sigma) {
  if (seq.height != bg.height || seq.width != bg.width || seq.size() != bg.frames)
    throw ContractError("extract_foreground: sequence and background dimensions differ");
  return extract_foreground(matricize(seq), bg, k_sigma);
}

// ---- PNM --------------------------------------------------------------------

namespace {

class PnmReader {
 public:
  explicit PnmReader(std::string_view bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    for (;;) {
      while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
      if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        return;
      }
    }
  }

  long next_int() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000) throw FormatError("PNM: integer field too large");
      ++pos_;
    }
    if (pos_ == start) throw FormatError("PNM: expected an integer field");
    return v;
  }

  // Exactly one whitespace byte separates the header from binary data.
  void end_header() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      throw FormatError("PNM: malformed header terminator");
    ++pos_;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  unsigned char byte_at(std::size_t k) const { return static_cast<unsigned char>(bytes_[pos_ + k]); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

Image decode_pnm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError("PNM: missing magic number");
  const char kind = bytes[1];
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6')
    throw FormatError(std::string("PNM: unsupported type P") + kind);
  const bool color = kind == '3' || kind == '6';
  const bool binary = kind == '5' || kind == '6';

  PnmReader r(bytes);
  const long width = r.next_int();
  const long height = r.next_int();
  const long maxval = r.next_int();
  if (width < 1 || height < 1) throw FormatError("PNM: non-positive dimensions");
  if (maxval < 1 || maxval > 65535) throw FormatError("PNM: maxval out of range");

  const std::size_t channels = color ? 3 : 1;
  const std::size_t samples = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * channels;
  std::vector<double> raw(samples);
  if (binary) {
    r.end_header();
    const std::size_t bps = maxval > 255 ? 2 : 1;
    if (r.remaining() < samples * bps) throw FormatError("PNM: truncated pixel data");
    for (std::size_t k = 0; k < samples; ++k) {
      long v = bps == 1 ? r.byte_at(k) : (long(r.byte_at(2 * k)) << 8) | r.byte_at(2 * k + 1);
      if (v > maxval) throw FormatError("PNM: sample exceeds maxval");
      raw[k] = static_cast<double>(v);
    }
  } else {
    for (std::size_t k = 0; k < samples; ++k) {
      const long v = r.next_int();
      if (v > maxval) throw FormatError("PNM: sample exceeds maxval");
      raw[k] = static_cast<double>(v);
    }
  }

  Image img;
  img.height = height;
  img.width = width;
  img.pixels.resize(height * width);
  const double scale = static_cast<double>(maxval);
  for (Index i = 0; i < img.pixels.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (color)
      img.pixels(i) = (0.299 * raw[3 * k] + 0.587 * raw[3 * k + 1] + 0.114 * raw[3 * k + 2]) / scale;
    else
      img.pixels(i) = raw[k] / scale;
  }
  return img;
}

Image read_pnm(const fs::path& path) {
  try {
    return decode_pnm(io::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string encode_pgm(Index height, Index width, const Eigen::VectorXd& pixels) {
  if (pixels.size() != height * width) throw ContractError("encode_pgm: pixel count does not match dimensions");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(pixels.size()));
  for (Index i = 0; i < pixels.size(); ++i) {
    const double x = std::clamp(pixels(i), 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * x))));
  }
  return out;
}

void write_pgm(const fs::path& path, Index height, Index width, const Eigen::VectorXd& pixels) {
  io::write_file_atomic(path, encode_pgm(height, width, pixels));
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

FrameSequence read_frames(const std::vector<fs::path>& files) {
  FrameSequence seq;
  for (const auto& f : files) {
    Image img = read_pnm(f);
    if (seq.frames.empty()) {
      seq.height = img.height;
      seq.width = img.width;
    } else if (img.height != seq.height || img.width != seq.width) {
      throw FormatError(f.string() + ": frame is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        ", expected " + std::to_string(seq.width) + "x" + std::to_string(seq.height));
    }
    seq.frames.push_back(std::move(img.pixels));
  }
  return seq;
}

FrameSequence read_frame_directory(const fs::path& dir) {
  const auto files = list_frames(dir);
  if (files.empty()) throw FormatError(dir.string() + ": no PGM/PPM frames found");
  return read_frames(files);
}

std::string frame_name(const std::string& prefix, Index index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld", static_cast<long long>(index));
  return prefix + buf + ".pgm";
}

void write_frames(const fs::path& dir, const FrameSequence& seq, Index first_index, const std::string& prefix) {
  fs::create_directories(dir);
  for (Index i = 0; i < seq.size(); ++i)
    write_pgm(dir / frame_name(prefix, first_index + i), seq.height, seq.width,
              seq.frames[static_cast<std::size_t>(i)]);
}

ForegroundMask mask_from_frames(const FrameSequence& seq) {
  seq.validate();
  ForegroundMask mask;
  mask.height = seq.height;
  mask.width = seq.width;
  mask.frames = seq.size();
  mask.bits.resize(seq.height * seq.width, seq.size());
  for (Index t = 0; t < seq.size(); ++t) mask.bits.col(t) = seq.frames[static_cast<std::size_t>(t)].array() > 0.5;
  return mask;
}

FrameSequence mask_to_frames(const ForegroundMask& mask) {
  FrameSequence seq;
  seq.height = mask.height;
  seq.width = mask.width;
  for (Index t = 0; t < mask.frames; ++t) seq.frames.emplace_back(mask.bits.col(t).cast<double>().matrix());
  return seq;
}

}  // namespace rsvd::video
