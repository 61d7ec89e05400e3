#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnr/data.hpp"
#include "gnr/nets.hpp"
#include "gnr/rng.hpp"
#include "gnr/tensor.hpp"

namespace gnr::explore {

using StyleCode = std::vector<double>;

struct LatentDirection {
  StyleCode vector;  // unit norm
  double eigenvalue = 0.0;
  std::vector<int> layer_scope;  // decoder modulation layers that contributed, input to output
};

/// Eigenvectors of A^T A, where A stacks the given (rows_l, style_dim)
/// matrices, sorted by descending eigenvalue. Throws std::invalid_argument
/// when top_k is outside [1, style_dim] or the matrices disagree on style_dim.
std::vector<LatentDirection> sefa_from_matrices(const std::vector<Tensor>& matrices, int top_k);
/// All decoder modulation layers, including the RGB head.
std::vector<LatentDirection> sefa_directions(const nets::Generator& gen, int top_k);

StyleCode edit_style(const StyleCode& s, const LatentDirection& direction, double magnitude);

class TimelineError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Interpolation { Hold, Linear };

struct Keyframe {
  int frame = 0;
  StyleCode style;
};

/// Keyframes with strictly increasing frame indices. Frames before the first
/// keyframe take its style; frames after the last keep the last style.
class StyleTimeline {
 public:
  StyleTimeline() = default;
  StyleTimeline(std::vector<Keyframe> keyframes, Interpolation interp);

  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  Interpolation interpolation() const { return interp_; }
  bool empty() const { return keyframes_.empty(); }
  StyleCode style_at(int frame) const;

  /// Lines `frame: s1 ... sD` and one `interp: hold|linear`; `#` starts a comment.
  static StyleTimeline parse(const std::string& text);
  static StyleTimeline load(const std::filesystem::path& path);
  std::string to_text() const;

 private:
  std::vector<Keyframe> keyframes_;
  Interpolation interp_ = Interpolation::Hold;
};

/// Single-frame translation: the building block translate_video maps over frames.
data::ImageTensor translate_frame(const nets::Generator& gen, const data::ImageTensor& frame, const StyleCode& style);

/// Each frame is translated independently under the timeline's style for its
/// index. An empty timeline means one style drawn from `rng` for every frame.
std::vector<data::ImageTensor> translate_video(const nets::Generator& gen, const std::vector<data::ImageTensor>& frames,
                                               const StyleTimeline& timeline, int style_dim, Rng& rng);

/// Mean RMS pixel difference between consecutive frames.
double mean_frame_difference(const std::vector<data::ImageTensor>& frames);

/// Numbered PNG sequences: every *.png in `dir`, in file name order.
std::vector<data::ImageTensor> load_frames(const std::filesystem::path& dir, int resolution);
void save_frames(const std::filesystem::path& dir, const std::vector<data::ImageTensor>& frames);

}  // namespace gnr::explore
