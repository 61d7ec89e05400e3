#include "gnr/explore.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gnr/image_io.hpp"

namespace gnr::explore {

std::vector<LatentDirection> sefa_from_matrices(const std::vector<Tensor>& matrices, int top_k) {
  if (matrices.empty()) throw std::invalid_argument("sefa: no modulation matrices");
  const int dim = matrices.front().dim(1);
  if (top_k < 1 || top_k > dim)
    throw std::invalid_argument("sefa: top_k must be in [1, " + std::to_string(dim) + "], got " + std::to_string(top_k));

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(dim, dim);
  std::vector<int> scope;
  for (std::size_t l = 0; l < matrices.size(); ++l) {
    const Tensor& m = matrices[l];
    if (m.rank() != 2 || m.dim(1) != dim)
      throw std::invalid_argument("sefa: matrix " + std::to_string(l) + " has shape " + shape_str(m.shape()) +
                                  ", expected (rows, " + std::to_string(dim) + ")");
    const Eigen::MatrixXd a =
        Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(m.data(), m.dim(0), dim)
            .cast<double>();
    gram += a.transpose() * a;
    scope.push_back(static_cast<int>(l));
  }

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  std::vector<LatentDirection> out;
  // Eigen sorts ascending.
  for (int i = dim - 1; i >= dim - top_k; --i) {
    LatentDirection d;
    const Eigen::VectorXd v = eig.eigenvectors().col(i).normalized();
    d.vector.assign(v.data(), v.data() + dim);
    d.eigenvalue = std::max(eig.eigenvalues()(i), 0.0);
    d.layer_scope = scope;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<LatentDirection> sefa_directions(const nets::Generator& gen, int top_k) {
  return sefa_from_matrices(gen.decoder.modulation_matrices(), top_k);
}

StyleCode edit_style(const StyleCode& s, const LatentDirection& direction, double magnitude) {
  if (s.size() != direction.vector.size())
    throw std::invalid_argument("edit_style: style has " + std::to_string(s.size()) + " entries, direction has " +
                                std::to_string(direction.vector.size()));
  StyleCode out = s;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += magnitude * direction.vector[i];
  return out;
}

StyleTimeline::StyleTimeline(std::vector<Keyframe> keyframes, Interpolation interp)
    : keyframes_(std::move(keyframes)), interp_(interp) {
  for (std::size_t i = 0; i < keyframes_.size(); ++i) {
    if (keyframes_[i].frame < 0) throw TimelineError("timeline: negative frame index " + std::to_string(keyframes_[i].frame));
    if (keyframes_[i].style.empty()) throw TimelineError("timeline: keyframe " + std::to_string(keyframes_[i].frame) + " has no style");
    if (i > 0 && keyframes_[i].frame <= keyframes_[i - 1].frame)
      throw TimelineError("timeline: frame indices must be strictly increasing (" + std::to_string(keyframes_[i - 1].frame) +
                          " then " + std::to_string(keyframes_[i].frame) + ")");
    if (keyframes_[i].style.size() != keyframes_.front().style.size())
      throw TimelineError("timeline: keyframe " + std::to_string(keyframes_[i].frame) + " has " +
                          std::to_string(keyframes_[i].style.size()) + " style entries, expected " +
                          std::to_string(keyframes_.front().style.size()));
  }
}

StyleCode StyleTimeline::style_at(int frame) const {
  if (keyframes_.empty()) throw TimelineError("timeline: no keyframes");
  if (frame <= keyframes_.front().frame) return keyframes_.front().style;
  if (frame >= keyframes_.back().frame) return keyframes_.back().style;
  const auto next = std::upper_bound(keyframes_.begin(), keyframes_.end(), frame,
                                     [](int f, const Keyframe& k) { return f < k.frame; });
  const Keyframe& b = *next;
  const Keyframe& a = *(next - 1);
  if (interp_ == Interpolation::Hold) return a.style;
  const double t = static_cast<double>(frame - a.frame) / (b.frame - a.frame);
  StyleCode out(a.style.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * a.style[i] + t * b.style[i];
  return out;
}

StyleTimeline StyleTimeline::parse(const std::string& text) {
  std::vector<Keyframe> keys;
  Interpolation interp = Interpolation::Hold;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto colon = line.find(':');
    const auto where = "timeline line " + std::to_string(line_no) + ": ";
    if (colon == std::string::npos) throw TimelineError(where + "expected 'frame: s1 ... sD' or 'interp: hold|linear'");
    std::istringstream key(line.substr(0, colon)), rest(line.substr(colon + 1));
    std::string head;
    key >> head;
    if (head == "interp") {
      std::string mode, extra;
      rest >> mode;
      if (rest >> extra) throw TimelineError(where + "trailing text after interpolation mode");
      if (mode == "hold")
        interp = Interpolation::Hold;
      else if (mode == "linear")
        interp = Interpolation::Linear;
      else
        throw TimelineError(where + "unknown interpolation '" + mode + "'");
      continue;
    }
    Keyframe k;
    std::size_t used = 0;
    try {
      k.frame = std::stoi(head, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != head.size()) throw TimelineError(where + "bad frame index '" + head + "'");
    std::string tok;
    while (rest >> tok) {
      try {
        k.style.push_back(std::stod(tok, &used));
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || used == 0 || !std::isfinite(k.style.back()))
        throw TimelineError(where + "bad style value '" + tok + "'");
    }
    keys.push_back(std::move(k));
  }
  return {std::move(keys), interp};
}

StyleTimeline StyleTimeline::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TimelineError("cannot open timeline file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string StyleTimeline::to_text() const {
  std::string out = std::string("interp: ") + (interp_ == Interpolation::Hold ? "hold" : "linear") + "\n";
  char buf[32];
  for (const auto& k : keyframes_) {
    out += std::to_string(k.frame) + ":";
    for (double v : k.style) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

data::ImageTensor translate_frame(const nets::Generator& gen, const data::ImageTensor& frame, const StyleCode& style) {
  const Tensor& px = frame.pixels();
  Tensor z({1, static_cast<int>(style.size())});
  for (std::size_t i = 0; i < style.size(); ++i) z[i] = static_cast<float>(style[i]);
  Tensor out = gen.translate(px.reshaped({1, px.dim(0), px.dim(1), px.dim(2)}), z);
  for (float& v : out.values()) v = std::clamp(v, -1.0f, 1.0f);
  return data::ImageTensor(std::move(out).reshaped(px.shape()));
}

std::vector<data::ImageTensor> translate_video(const nets::Generator& gen, const std::vector<data::ImageTensor>& frames,
                                               const StyleTimeline& timeline, int style_dim, Rng& rng) {
  if (frames.empty()) throw std::invalid_argument("translate_video: no frames");
  StyleCode fallback;
  if (timeline.empty()) {
    const Tensor z = nets::sample_styles(rng, 1, style_dim);
    fallback.assign(z.values().begin(), z.values().end());
  } else if (static_cast<int>(timeline.keyframes().front().style.size()) != style_dim) {
    throw TimelineError("translate_video: timeline styles have " +
                        std::to_string(timeline.keyframes().front().style.size()) + " entries, generator expects " +
                        std::to_string(style_dim));
  }
  std::vector<data::ImageTensor> out;
  out.reserve(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f)
    out.push_back(translate_frame(gen, frames[f], timeline.empty() ? fallback : timeline.style_at(static_cast<int>(f))));
  return out;
}

double mean_frame_difference(const std::vector<data::ImageTensor>& frames) {
  if (frames.size() < 2) throw std::invalid_argument("mean_frame_difference: need at least 2 frames");
  double total = 0.0;
  for (std::size_t f = 1; f < frames.size(); ++f) {
    const Tensor& a = frames[f - 1].pixels();
    const Tensor& b = frames[f].pixels();
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += (static_cast<double>(a[i]) - b[i]) * (static_cast<double>(a[i]) - b[i]);
    total += std::sqrt(s / static_cast<double>(a.numel()));
  }
  return total / static_cast<double>(frames.size() - 1);
}

std::vector<data::ImageTensor> load_frames(const std::filesystem::path& dir, int resolution) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("frames directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<data::ImageTensor> out;
  for (const auto& f : files) out.emplace_back(io::to_square(io::read_image(f), resolution));
  return out;
}

void save_frames(const std::filesystem::path& dir, const std::vector<data::ImageTensor>& frames) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::snprintf(name, sizeof name, "%05zu.png", f);
    io::write_png(dir / name, frames[f].pixels());
  }
}

}  // namespace gnr::explore
