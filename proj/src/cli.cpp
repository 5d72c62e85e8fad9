#include "rsvd/cli.hpp"

#include "rsvd/core.hpp"
#include "rsvd/eval.hpp"
#include "rsvd/matrix_io.hpp"
#include "rsvd/parallel.hpp"
#include "rsvd/select.hpp"
#include "rsvd/video.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace rsvd::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Signals a non-converged fit after all outputs have been written.
struct NotConverged {};

double parse_number(const std::string& text, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw ContractError(what + ": expected a number, got '" + text + "'");
  return v;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number(item, what));
  if (out.empty()) throw ContractError(what + ": empty list");
  return out;
}

std::optional<double> parse_auto_number(const std::string& text, const std::string& what) {
  if (text == "auto") return std::nullopt;
  return parse_number(text, what);
}

std::optional<Index> parse_auto_rank(const std::string& text) {
  if (text == "auto") return std::nullopt;
  const double v = parse_number(text, "--rank");
  if (v < 1 || v != std::floor(v)) throw ContractError("--rank must be a positive integer or 'auto'");
  return static_cast<Index>(v);
}

struct FitFlags {
  std::string alpha = "0.5";
  std::string rank = "1";
  double epsilon = 0.1;
  std::string grid = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";
  double tol = 1e-6;
  int max_iter = 100;
  double sigma2_floor = 1e-12;
  std::uint64_t seed = 1;

  RSvdConfig base() const {
    RSvdConfig c;
    c.tol = tol;
    c.max_iter = max_iter;
    c.sigma2_floor = sigma2_floor;
    return c;
  }
};

void add_fit_flags(CLI::App* cmd, FitFlags& f, const std::string& default_rank) {
  f.rank = default_rank;
  cmd->add_option("--alpha", f.alpha, "Robustness parameter in [0,1], or 'auto'")->capture_default_str();
  cmd->add_option("--rank", f.rank, "Number of components, or 'auto'")->capture_default_str();
  cmd->add_option("--epsilon", f.epsilon, "Unexplained share allowed by automatic rank")->capture_default_str();
  cmd->add_option("--grid", f.grid, "Comma-separated alpha grid for 'auto'")->capture_default_str();
  cmd->add_option("--tol", f.tol, "Relative convergence tolerance")->capture_default_str();
  cmd->add_option("--max-iter", f.max_iter, "Iteration cap per component")->capture_default_str();
  cmd->add_option("--sigma2-floor", f.sigma2_floor, "Lower bound on the scale estimate")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Seed for all randomness")->capture_default_str();
}

ordered_json selection_json(const AlphaSelection& sel, Index rank, double epsilon) {
  ordered_json j;
  j["grid"] = sel.grid;
  j["scores"] = sel.scores;  // +inf (flagged) serializes as null
  j["flagged"] = sel.flagged;
  j["chosen_alpha"] = sel.chosen;
  j["chosen_rank"] = rank;
  j["epsilon"] = epsilon;
  return j;
}

struct FitOutcome {
  RSvdModel<double> model;
  std::optional<RankSelection> rank_selection;
  std::optional<AlphaSelection> alpha_selection;
};

FitOutcome fit_matrix(const DataMatrix& X, const FitFlags& f) {
  FitOutcome o;
  std::optional<Index> rank = parse_auto_rank(f.rank);
  if (!rank) {
    o.rank_selection = select_rank(X, f.epsilon);
    rank = o.rank_selection->chosen_rank;
  }
  std::optional<double> alpha = parse_auto_number(f.alpha, "--alpha");
  if (!alpha) {
    o.alpha_selection = select_alpha(X, *rank, parse_list(f.grid, "--grid"), f.base());
    alpha = o.alpha_selection->chosen;
  }
  RSvdConfig cfg = f.base();
  cfg.alpha = *alpha;
  cfg.rank = *rank;
  o.model = rsvd_dpd(X, cfg);
  return o;
}

void annotate(ordered_json& doc, const FitOutcome& o, const FitFlags& f) {
  if (o.rank_selection) {
    doc["chosen_rank"] = o.rank_selection->chosen_rank;
    doc["epsilon"] = f.epsilon;
    doc["classical_lambdas"] = o.rank_selection->classical_lambdas;
  }
  if (o.alpha_selection) {
    doc["chosen_alpha"] = o.alpha_selection->chosen;
    doc["selection"] = selection_json(*o.alpha_selection, o.model.config.rank, f.epsilon);
  }
}

void emit(const std::string& path, const ordered_json& doc, std::ostream& out) {
  const std::string text = io::dump_json(doc);
  if (path.empty() || path == "-")
    out << text;
  else
    io::write_file_atomic(path, text);
}

// ---- decompose --------------------------------------------------------------

struct DecomposeFlags {
  std::string input;
  std::string output;
  FitFlags fit;
};

void cmd_decompose(const DecomposeFlags& f, std::ostream& out) {
  const DataMatrix X = io::read_matrix(f.input);
  const FitOutcome o = fit_matrix(X, f.fit);
  ordered_json doc = io::model_to_json(o.model);
  annotate(doc, o, f.fit);
  emit(f.output, doc, out);
  if (!o.model.all_converged()) throw NotConverged{};
}

// ---- background -------------------------------------------------------------

struct BackgroundFlags {
  std::string input;
  std::string output;
  Index height = 0;
  Index width = 0;
  double k_sigma = 3.0;
  Index batch = 120;
  FitFlags fit;
};

struct Batch {
  Index first = 0;
  Index count = 0;
};

// Consecutive batches of `size` frames; a trailing single frame joins the
// previous batch since a fit needs at least two columns.
std::vector<Batch> make_batches(Index frames, Index size) {
  std::vector<Batch> out;
  for (Index first = 0; first < frames; first += size) out.push_back({first, std::min(size, frames - first)});
  if (out.size() > 1 && out.back().count < 2) {
    out[out.size() - 2].count += out.back().count;
    out.pop_back();
  }
  return out;
}

struct LoadedFrames {
  DataMatrix X;
  Index height = 0;
  Index width = 0;
  std::vector<std::string> names;
};

LoadedFrames load_frames(const std::string& input, Index height, Index width) {
  LoadedFrames lf;
  if (fs::is_directory(input)) {
    const auto files = video::list_frames(input);
    if (files.empty()) throw FormatError(input + ": no PGM/PPM frames found");
    const auto seq = video::read_frames(files);
    if (seq.size() < 2) throw FormatError(input + ": need at least 2 frames");
    lf.X = video::matricize(seq);
    lf.height = seq.height;
    lf.width = seq.width;
    for (const auto& p : files) lf.names.push_back(p.filename().string());
  } else {
    lf.X = io::read_matrix(input);
    if (height < 1 || width < 1) throw ContractError("matrix input needs --height and --width");
    if (height * width != lf.X.rows())
      throw FormatError(input + ": " + std::to_string(lf.X.rows()) + " rows do not match " + std::to_string(height) +
                        "x" + std::to_string(width) + " frames");
    lf.height = height;
    lf.width = width;
    for (Index t = 0; t < lf.X.cols(); ++t) lf.names.push_back(video::frame_name("frame_", t));
  }
  return lf;
}

struct BatchResult {
  video::BackgroundModel bg;
  video::ForegroundResult fg;
  std::optional<AlphaSelection> alpha_selection;
};

BatchResult fit_batch(const DataMatrix& Xb, Index height, Index width, const FitFlags& fit, double k_sigma) {
  BatchResult r;
  std::optional<Index> rank = parse_auto_rank(fit.rank);
  std::optional<double> alpha = parse_auto_number(fit.alpha, "--alpha");
  if (!alpha) {
    Index sel_rank = rank ? *rank : select_rank(Xb, fit.epsilon).chosen_rank;
    r.alpha_selection = select_alpha(Xb, sel_rank, parse_list(fit.grid, "--grid"), fit.base(), 1);
    alpha = r.alpha_selection->chosen;
  }
  r.bg = video::model_background(Xb, height, width, *alpha, rank, fit.epsilon, fit.base());
  r.fg = video::extract_foreground(Xb, r.bg, k_sigma);
  return r;
}

void cmd_background(const BackgroundFlags& f, std::ostream& out) {
  if (f.batch < 2) throw ContractError("--batch must be at least 2");
  const LoadedFrames lf = load_frames(f.input, f.height, f.width);
  const fs::path root = f.output;
  fs::create_directories(root / "background");
  fs::create_directories(root / "foreground");
  fs::create_directories(root / "mask");

  const auto batches = make_batches(lf.X.cols(), f.batch);
  std::vector<char> converged(batches.size(), 1);
  std::vector<ordered_json> docs(batches.size());
  parallel_for(batches.size(), [&](std::size_t b) {
    const Batch& batch = batches[b];
    const DataMatrix Xb = lf.X.middleCols(batch.first, batch.count);
    const BatchResult r = fit_batch(Xb, lf.height, lf.width, f.fit, f.k_sigma);
    for (Index t = 0; t < batch.count; ++t) {
      const std::string& name = lf.names[static_cast<std::size_t>(batch.first + t)];
      fs::path stem = fs::path(name).stem();
      stem += ".pgm";
      video::write_pgm(root / "background" / stem, lf.height, lf.width, r.bg.background.col(t));
      video::write_pgm(root / "foreground" / stem, lf.height, lf.width, r.fg.residuals.col(t).cwiseAbs());
      video::write_pgm(root / "mask" / stem, lf.height, lf.width, r.fg.mask.bits.col(t).cast<double>().matrix());
    }
    ordered_json doc = io::model_to_json(r.bg.model);
    doc["batch"] = b;
    doc["first_frame"] = batch.first;
    doc["frame_count"] = batch.count;
    doc["height"] = lf.height;
    doc["width"] = lf.width;
    doc["k_sigma"] = f.k_sigma;
    doc["threshold"] = f.k_sigma * std::sqrt(r.bg.model.sigma2);
    if (r.bg.rank_selection) {
      doc["chosen_rank"] = r.bg.rank_selection->chosen_rank;
      doc["epsilon"] = f.fit.epsilon;
    }
    if (r.alpha_selection) {
      doc["chosen_alpha"] = r.alpha_selection->chosen;
      doc["selection"] = selection_json(*r.alpha_selection, r.bg.model.rank(), f.fit.epsilon);
    }
    doc["foreground_pixels"] = r.fg.mask.bits.count();
    io::write_file_atomic(root / fs::path(video::frame_name("model_", static_cast<Index>(b))).replace_extension(".json"),
                          io::dump_json(doc));
    converged[b] = r.bg.model.all_converged() ? 1 : 0;
    docs[b] = std::move(doc);
  });

  ordered_json summary;
  summary["frames"] = lf.X.cols();
  summary["height"] = lf.height;
  summary["width"] = lf.width;
  summary["batch_size"] = f.batch;
  summary["batches"] = batches.size();
  std::vector<Index> ranks;
  std::vector<double> alphas;
  for (const auto& d : docs) {
    ranks.push_back(d["rank"].get<Index>());
    alphas.push_back(d["alpha"].get<double>());
  }
  summary["ranks"] = ranks;
  summary["alphas"] = alphas;
  summary["converged"] = std::all_of(converged.begin(), converged.end(), [](char c) { return c != 0; });
  io::write_file_atomic(root / "summary.json", io::dump_json(summary));
  out << io::dump_json(summary);
  if (!summary["converged"].get<bool>()) throw NotConverged{};
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateFlags {
  std::string pred;
  std::string truth;
  std::string frames;
  std::string sweep;
  std::string output;
  std::string csv;
  double k_sigma = 3.0;
  Index batch = 120;
  FitFlags fit;
};

ordered_json scores_json(const eval::Scores& s) {
  ordered_json j;
  j["precision"] = s.precision;
  j["recall"] = s.recall;
  j["f1"] = s.f1;
  j["true_positive"] = s.true_positive;
  j["false_positive"] = s.false_positive;
  j["false_negative"] = s.false_negative;
  return j;
}

ordered_json metrics_json(const eval::MaskMetrics& m, const std::vector<std::string>& names) {
  ordered_json doc;
  ordered_json frames = ordered_json::array();
  for (std::size_t t = 0; t < m.per_frame.size(); ++t) {
    ordered_json fj;
    fj["frame"] = names[t];
    fj["precision"] = m.per_frame[t].precision;
    fj["recall"] = m.per_frame[t].recall;
    fj["f1"] = m.per_frame[t].f1;
    frames.push_back(std::move(fj));
  }
  doc["aggregate"] = scores_json(m.aggregate);
  doc["per_frame"] = std::move(frames);
  return doc;
}

std::string metrics_csv(const eval::MaskMetrics& m, const std::vector<std::string>& names) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "frame,precision,recall,f1\n";
  for (std::size_t t = 0; t < m.per_frame.size(); ++t)
    ss << names[t] << ',' << m.per_frame[t].precision << ',' << m.per_frame[t].recall << ',' << m.per_frame[t].f1
       << '\n';
  return ss.str();
}

std::vector<std::string> filenames(const std::vector<fs::path>& files) {
  std::vector<std::string> out;
  for (const auto& p : files) out.push_back(p.filename().string());
  return out;
}

video::ForegroundMask read_mask_dir(const std::vector<fs::path>& files) {
  return video::mask_from_frames(video::read_frames(files));
}

void cmd_evaluate(const EvaluateFlags& f, std::ostream& out) {
  if (f.truth.empty()) throw ContractError("evaluate needs --truth");
  const auto truth_files = video::list_frames(f.truth);
  if (truth_files.empty()) throw FormatError(f.truth + ": no mask frames");
  const auto names = filenames(truth_files);
  const video::ForegroundMask truth = read_mask_dir(truth_files);

  if (f.sweep.empty()) {
    if (f.pred.empty()) throw ContractError("evaluate needs --pred (or --frames with --sweep)");
    const auto pred_files = video::list_frames(f.pred);
    if (filenames(pred_files) != names) throw FormatError("prediction and truth frame lists differ");
    const video::ForegroundMask pred = read_mask_dir(pred_files);
    if (pred.height != truth.height || pred.width != truth.width)
      throw FormatError("prediction and truth frame sizes differ");
    const auto metrics = eval::evaluate_mask(pred, truth);
    emit(f.output, metrics_json(metrics, names), out);
    if (!f.csv.empty()) io::write_file_atomic(f.csv, metrics_csv(metrics, names));
    return;
  }

  // Sweep: fit each batch once, score masks over a k_sigma grid.
  if (f.frames.empty()) throw ContractError("--sweep needs --frames");
  std::vector<double> ks;
  {
    std::string spec = f.sweep;
    std::replace(spec.begin(), spec.end(), ':', ',');
    const auto parts = parse_list(spec, "--sweep");
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0])
      throw ContractError("--sweep expects lo:hi:step with step > 0");
    for (Index i = 0;; ++i) {
      const double k = parts[0] + double(i) * parts[2];
      if (k > parts[1] + 1e-9 * parts[2]) break;
      if (k > 0.0) ks.push_back(k);
    }
    if (ks.empty()) throw ContractError("--sweep produced no positive k_sigma values");
  }
  const auto frame_files = video::list_frames(f.frames);
  if (filenames(frame_files) != names) throw FormatError("frame and truth lists differ");
  const auto seq = video::read_frames(frame_files);
  if (seq.height != truth.height || seq.width != truth.width) throw FormatError("frame and truth sizes differ");
  const DataMatrix X = video::matricize(seq);
  const auto batches = make_batches(X.cols(), std::max<Index>(f.batch, 2));

  DataMatrix residuals(X.rows(), X.cols());
  Eigen::VectorXd sigma(X.cols());
  std::vector<char> converged(batches.size(), 1);
  parallel_for(batches.size(), [&](std::size_t b) {
    const DataMatrix Xb = X.middleCols(batches[b].first, batches[b].count);
    const BatchResult r = fit_batch(Xb, seq.height, seq.width, f.fit, 1.0);
    residuals.middleCols(batches[b].first, batches[b].count) = r.fg.residuals;
    sigma.segment(batches[b].first, batches[b].count).setConstant(std::sqrt(r.bg.model.sigma2));
    converged[b] = r.bg.model.all_converged() ? 1 : 0;
  });

  ordered_json doc;
  ordered_json rows = ordered_json::array();
  double best_f1 = -1.0, best_k = ks.front();
  for (double k : ks) {
    video::ForegroundMask pred;
    pred.height = seq.height;
    pred.width = seq.width;
    pred.frames = seq.size();
    pred.bits = residuals.array().abs() > (Eigen::VectorXd::Ones(X.rows()) * (k * sigma).transpose()).array();
    const auto m = eval::evaluate_mask(pred, truth);
    ordered_json row = scores_json(m.aggregate);
    row["k_sigma"] = k;
    rows.push_back(std::move(row));
    if (m.aggregate.f1 > best_f1) {
      best_f1 = m.aggregate.f1;
      best_k = k;
    }
  }
  doc["sweep"] = std::move(rows);
  doc["best_k_sigma"] = best_k;
  doc["best_f1"] = best_f1;
  doc["converged"] = std::all_of(converged.begin(), converged.end(), [](char c) { return c != 0; });
  emit(f.output, doc, out);
}

// ---- synth ------------------------------------------------------------------

struct SynthFlags {
  std::string output;
  eval::SynthSpec spec;
  std::string contamination = "none";
  std::string contamination_frames;
};

void cmd_synth(SynthFlags f, std::ostream& out) {
  f.spec.contamination = eval::parse_contamination(f.contamination);
  if (!f.contamination_frames.empty()) {
    std::string s = f.contamination_frames;
    std::replace(s.begin(), s.end(), ':', ',');
    const auto parts = parse_list(s, "--contamination-frames");
    if (parts.size() != 2) throw ContractError("--contamination-frames expects first:last");
    f.spec.contamination_first = static_cast<Index>(parts[0]);
    f.spec.contamination_last = static_cast<Index>(parts[1]);
  }
  const auto res = eval::generate_synthetic(f.spec);
  const fs::path root = f.output;
  video::write_frames(root / "frames", res.sequence);
  video::write_frames(root / "truth", video::mask_to_frames(res.truth));
  video::write_frames(root / "background", video::devectorize(res.clean_background, f.spec.height, f.spec.width));
  io::write_binary(root / "frames.rsvd", video::matricize(res.sequence));

  const auto& s = f.spec;
  ordered_json doc;
  doc["height"] = s.height;
  doc["width"] = s.width;
  doc["frames"] = s.frames;
  doc["background_rank"] = s.background_rank;
  doc["illumination"] = s.illumination;
  doc["object_size"] = s.object_size;
  doc["object_intensity"] = s.object_intensity;
  doc["object_row"] = s.object_row;
  doc["object_col"] = s.object_col;
  doc["velocity_row"] = s.velocity_row;
  doc["velocity_col"] = s.velocity_col;
  doc["noise_sd"] = s.noise_sd;
  doc["contamination"] = eval::to_string(s.contamination);
  doc["contamination_first"] = s.contamination_first;
  doc["contamination_last"] = s.contamination_last;
  doc["density"] = s.density;
  doc["contamination_sd"] = s.contamination_sd;
  doc["cover_fraction"] = s.cover_fraction;
  doc["cover_value"] = s.cover_value;
  doc["blur_radius"] = s.blur_radius;
  doc["shift"] = s.shift;
  doc["seed"] = s.seed;
  doc["contaminated"] = res.contaminated;
  doc["foreground_pixels"] = res.truth.bits.count();
  io::write_file_atomic(root / "spec.json", io::dump_json(doc));
  out << io::dump_json(doc);
}

// ---- select-alpha -----------------------------------------------------------

struct SelectFlags {
  std::string input;
  std::string output;
  FitFlags fit;
};

void cmd_select_alpha(const SelectFlags& f, std::ostream& out) {
  const DataMatrix X = io::read_matrix(f.input);
  std::optional<Index> rank = parse_auto_rank(f.fit.rank);
  if (!rank) rank = select_rank(X, f.fit.epsilon).chosen_rank;
  const auto sel = select_alpha(X, *rank, parse_list(f.fit.grid, "--grid"), f.fit.base());
  emit(f.output, selection_json(sel, *rank, f.fit.epsilon), out);
}

// ---- consistency ------------------------------------------------------------

struct ConsistencyFlags {
  std::string sizes = "50,100,200,400";
  Index replications = 50;
  std::uint64_t seed = 1;
  double alpha = 0.5;
  double noise_scale = 1.0;
  double tol = 1e-10;
  int max_iter = 500;
  std::string output;
};

void cmd_consistency(const ConsistencyFlags& f, std::ostream& out) {
  std::vector<Index> sizes;
  for (double s : parse_list(f.sizes, "--sizes")) sizes.push_back(static_cast<Index>(s));
  eval::ConsistencyOptions opt;
  opt.alpha = f.alpha;
  opt.noise_scale = f.noise_scale;
  opt.tol = f.tol;
  opt.max_iter = f.max_iter;
  const auto rep = eval::consistency_experiment(sizes, f.replications, f.seed, opt);
  ordered_json doc;
  doc["alpha"] = rep.alpha;
  doc["replications"] = rep.replications;
  doc["seed"] = rep.seed;
  doc["noise_scale"] = rep.noise_scale;
  ordered_json cells = ordered_json::array();
  for (const auto& c : rep.cells) {
    ordered_json cj;
    cj["n"] = c.n;
    cj["true_lambda"] = c.true_lambda;
    cj["bias"] = c.bias;
    cj["rmse"] = c.rmse;
    cj["nonconverged"] = c.nonconverged;
    cells.push_back(std::move(cj));
  }
  doc["cells"] = std::move(cells);
  emit(f.output, doc, out);
}

// ---- bench ------------------------------------------------------------------

struct BenchFlags {
  std::string sizes = "500x50,1000x50";
  double alpha = 0.5;
  Index rank = 1;
  int runs = 5;
  int iterations = 10;
  std::uint64_t seed = 1;
  std::string output;
};

void cmd_bench(const BenchFlags& f, std::ostream& out) {
  std::vector<std::pair<Index, Index>> sizes;
  std::stringstream ss(f.sizes);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    if (x == std::string::npos) throw ContractError("--sizes entries look like 400x100");
    sizes.emplace_back(static_cast<Index>(parse_number(item.substr(0, x), "--sizes")),
                       static_cast<Index>(parse_number(item.substr(x + 1), "--sizes")));
  }
  const auto rows = eval::timing_benchmark(sizes, f.alpha, f.rank, f.runs, f.iterations, f.seed);
  ordered_json doc;
  doc["alpha"] = f.alpha;
  doc["rank"] = f.rank;
  ordered_json table = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json rj;
    rj["rows"] = r.rows;
    rj["cols"] = r.cols;
    rj["runs"] = r.runs;
    rj["iterations"] = r.iterations;
    rj["seconds_per_frame_mean"] = r.seconds_per_frame_mean;
    rj["seconds_per_frame_sd"] = r.seconds_per_frame_sd;
    rj["seconds_per_iteration_mean"] = r.seconds_per_iteration_mean;
    rj["seconds_per_iteration_sd"] = r.seconds_per_iteration_sd;
    table.push_back(std::move(rj));
  }
  doc["table"] = std::move(table);
  emit(f.output, doc, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust SVD (minimum density power divergence) and video background modelling"};
  app.require_subcommand(1);

  DecomposeFlags dec;
  auto* c_dec = app.add_subcommand("decompose", "Robust SVD of a CSV or binary matrix, written as model JSON");
  c_dec->add_option("-i,--input", dec.input, "Matrix file (CSV or RSVD binary)")->required();
  c_dec->add_option("-o,--output", dec.output, "Model JSON path (default: stdout)");
  add_fit_flags(c_dec, dec.fit, "1");

  BackgroundFlags bgf;
  auto* c_bg = app.add_subcommand("background", "Background / foreground / mask frames from a frame directory");
  c_bg->add_option("-i,--input", bgf.input, "Directory of PGM frames, or a matrix file")->required();
  c_bg->add_option("-o,--output", bgf.output, "Output directory")->required();
  c_bg->add_option("--height", bgf.height, "Frame height for matrix input");
  c_bg->add_option("--width", bgf.width, "Frame width for matrix input");
  c_bg->add_option("--k-sigma", bgf.k_sigma, "Mask threshold in units of sqrt(sigma2)")->capture_default_str();
  c_bg->add_option("--batch", bgf.batch, "Frames per independent fit")->capture_default_str();
  add_fit_flags(c_bg, bgf.fit, "auto");

  EvaluateFlags evf;
  auto* c_ev = app.add_subcommand("evaluate", "Precision / recall / F1 of predicted masks against ground truth");
  c_ev->add_option("--pred", evf.pred, "Directory of predicted mask PGMs");
  c_ev->add_option("--truth", evf.truth, "Directory of ground-truth mask PGMs")->required();
  c_ev->add_option("--frames", evf.frames, "Frame directory (with --sweep)");
  c_ev->add_option("--sweep", evf.sweep, "k_sigma grid lo:hi:step; fits --frames and reports the best pooled F1");
  c_ev->add_option("-o,--output", evf.output, "Metrics JSON path (default: stdout)");
  c_ev->add_option("--csv", evf.csv, "Per-frame metrics CSV path");
  c_ev->add_option("--batch", evf.batch, "Frames per fit in sweep mode")->capture_default_str();
  add_fit_flags(c_ev, evf.fit, "auto");

  SynthFlags syf;
  auto* c_sy = app.add_subcommand("synth", "Seeded synthetic video with ground-truth masks");
  c_sy->add_option("-o,--output", syf.output, "Output directory")->required();
  c_sy->add_option("--height", syf.spec.height)->capture_default_str();
  c_sy->add_option("--width", syf.spec.width)->capture_default_str();
  c_sy->add_option("--frames", syf.spec.frames)->capture_default_str();
  c_sy->add_option("--rank", syf.spec.background_rank, "Background rank")->capture_default_str();
  c_sy->add_option("--illumination", syf.spec.illumination)->capture_default_str();
  c_sy->add_option("--object-size", syf.spec.object_size)->capture_default_str();
  c_sy->add_option("--object-intensity", syf.spec.object_intensity)->capture_default_str();
  c_sy->add_option("--object-row", syf.spec.object_row)->capture_default_str();
  c_sy->add_option("--object-col", syf.spec.object_col)->capture_default_str();
  c_sy->add_option("--velocity-row", syf.spec.velocity_row)->capture_default_str();
  c_sy->add_option("--velocity-col", syf.spec.velocity_col)->capture_default_str();
  c_sy->add_option("--noise-sd", syf.spec.noise_sd)->capture_default_str();
  c_sy->add_option("--contamination", syf.contamination,
                   "none | salt_pepper | cover | defocus_blur | gaussian_noise | moved")
      ->capture_default_str();
  c_sy->add_option("--contamination-frames", syf.contamination_frames, "1-based first:last");
  c_sy->add_option("--density", syf.spec.density)->capture_default_str();
  c_sy->add_option("--contamination-sd", syf.spec.contamination_sd)->capture_default_str();
  c_sy->add_option("--cover-fraction", syf.spec.cover_fraction)->capture_default_str();
  c_sy->add_option("--blur-radius", syf.spec.blur_radius)->capture_default_str();
  c_sy->add_option("--shift", syf.spec.shift)->capture_default_str();
  c_sy->add_option("--seed", syf.spec.seed)->capture_default_str();

  SelectFlags sef;
  auto* c_se = app.add_subcommand("select-alpha", "Grid search for the robustness parameter");
  c_se->add_option("-i,--input", sef.input, "Matrix file")->required();
  c_se->add_option("-o,--output", sef.output, "Report JSON path (default: stdout)");
  add_fit_flags(c_se, sef.fit, "auto");

  ConsistencyFlags cof;
  auto* c_co = app.add_subcommand("consistency", "Bias / RMSE of the first robust singular value versus n");
  c_co->add_option("--sizes", cof.sizes)->capture_default_str();
  c_co->add_option("--replications", cof.replications)->capture_default_str();
  c_co->add_option("--seed", cof.seed)->capture_default_str();
  c_co->add_option("--alpha", cof.alpha)->capture_default_str();
  c_co->add_option("--noise-scale", cof.noise_scale)->capture_default_str();
  c_co->add_option("--tol", cof.tol)->capture_default_str();
  c_co->add_option("--max-iter", cof.max_iter)->capture_default_str();
  c_co->add_option("-o,--output", cof.output);

  BenchFlags bef;
  auto* c_be = app.add_subcommand("bench", "Per-frame and per-iteration fit time");
  c_be->add_option("--sizes", bef.sizes, "Comma-separated ROWSxCOLS")->capture_default_str();
  c_be->add_option("--alpha", bef.alpha)->capture_default_str();
  c_be->add_option("--rank", bef.rank)->capture_default_str();
  c_be->add_option("--runs", bef.runs)->capture_default_str();
  c_be->add_option("--iterations", bef.iterations)->capture_default_str();
  c_be->add_option("--seed", bef.seed)->capture_default_str();
  c_be->add_option("-o,--output", bef.output);

  std::vector<const char*> argv{"rsvd"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kSuccess;
    }
    err << "rsvd: " << e.what() << "\n";
    return kMisuse;
  }

  try {
    if (c_dec->parsed()) cmd_decompose(dec, out);
    else if (c_bg->parsed()) cmd_background(bgf, out);
    else if (c_ev->parsed()) cmd_evaluate(evf, out);
    else if (c_sy->parsed()) cmd_synth(syf, out);
    else if (c_se->parsed()) cmd_select_alpha(sef, out);
    else if (c_co->parsed()) cmd_consistency(cof, out);
    else if (c_be->parsed()) cmd_bench(bef, out);
  } catch (const NotConverged&) {
    err << "rsvd: warning: fit did not converge within --max-iter; outputs were written with flags\n";
    return kNotConverged;
  } catch (const FormatError& e) {
    err << "rsvd: " << e.what() << "\n";
    return kInputError;
  } catch (const DegenerateInputError& e) {
    err << "rsvd: " << e.what() << "\n";
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "rsvd: " << e.what() << "\n";
    return kInputError;
  } catch (const RankDeficiencyError& e) {
    err << "rsvd: " << e.what() << "\n";
    return kNotConverged;
  } catch (const Error& e) {
    err << "rsvd: " << e.what() << "\n";
    return kMisuse;
  }
  return kSuccess;
}

}  // namespace rsvd::cli
