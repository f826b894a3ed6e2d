#pragma once

// Domain types shared by every module.
//
// Coordinates are (x = column, y = row) everywhere, with the origin at the
// centre of the top-left pixel. A point is inside an image of size H x W when
// 0 <= x < W and 0 <= y < H.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace t4g {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
double norm(Point p);

struct Resolution {
  int height = 0;
  int width = 0;

  bool contains(Point p) const {
    return p.x >= 0.0 && p.y >= 0.0 && p.x < width && p.y < height;
  }
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

/// Dense N x H x W x C volume, frame-major then row, column, channel.
template <typename T>
class BasicVolume {
 public:
  using value_type = T;

  BasicVolume() = default;
  BasicVolume(int frames, int height, int width, int channels, T fill = T{});
  BasicVolume(int frames, int height, int width, int channels, std::vector<T> data);

  int frames() const noexcept { return frames_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  Resolution grid() const noexcept { return {height_, width_}; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t offset(int frame, int row, int col) const noexcept {
    return ((static_cast<std::size_t>(frame) * height_ + row) * width_ + col) * channels_;
  }
  std::size_t frame_size() const noexcept {
    return static_cast<std::size_t>(height_) * width_ * channels_;
  }

  std::span<const T> cell(int frame, int row, int col) const {
    return {data_.data() + offset(frame, row, col), static_cast<std::size_t>(channels_)};
  }
  std::span<T> cell(int frame, int row, int col) {
    return {data_.data() + offset(frame, row, col), static_cast<std::size_t>(channels_)};
  }
  std::span<const T> frame(int n) const { return {data_.data() + n * frame_size(), frame_size()}; }
  std::span<T> frame(int n) { return {data_.data() + n * frame_size(), frame_size()}; }

  T& at(int frame, int row, int col, int ch) { return data_[offset(frame, row, col) + ch]; }
  const T& at(int frame, int row, int col, int ch) const {
    return data_[offset(frame, row, col) + ch];
  }

  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  template <typename U>
  bool same_shape(const BasicVolume<U>& other) const noexcept {
    return frames_ == other.frames() && height_ == other.height() && width_ == other.width() &&
           channels_ == other.channels();
  }

  friend bool operator==(const BasicVolume&, const BasicVolume&) = default;

 private:
  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

/// Storage and interchange type (32-bit, matches the T4GF file format).
using FeatureVolume = BasicVolume<float>;
/// Compute type used by matching, the loss and the networks.
using Tensor = BasicVolume<double>;

Tensor to_tensor(const FeatureVolume& volume);
FeatureVolume to_features(const Tensor& tensor);

/// Throws ErrorCode::validation unless every dimension is >= 1, the data
/// length matches and all entries are finite.
void validate(const FeatureVolume& volume);

struct Track {
  int query_frame = 0;
  std::vector<Point> positions;
  std::vector<bool> visible;

  friend bool operator==(const Track&, const Track&) = default;
};

struct TrackSet {
  int num_frames = 0;
  Resolution resolution;
  std::vector<Track> tracks;

  friend bool operator==(const TrackSet&, const TrackSet&) = default;
};

void validate(const TrackSet& tracks);

/// H x W x 2 displacement field, (dx, dy) per pixel.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  FlowField() = default;
  FlowField(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 2, 0.0f) {}

  Point at(int row, int col) const {
    const std::size_t o = (static_cast<std::size_t>(row) * width + col) * 2;
    return {data[o], data[o + 1]};
  }
  void set(int row, int col, Point d) {
    const std::size_t o = (static_cast<std::size_t>(row) * width + col) * 2;
    data[o] = static_cast<float>(d.x);
    data[o + 1] = static_cast<float>(d.y);
  }

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

/// forward[i] maps frame i -> i+1, backward[i] maps frame i+1 -> i.
struct FlowPyramid {
  int num_frames = 0;
  Resolution resolution;
  std::vector<FlowField> forward;
  std::vector<FlowField> backward;

  friend bool operator==(const FlowPyramid&, const FlowPyramid&) = default;
};

void validate(const FlowPyramid& flows);

struct Correspondence {
  Point query;
  int query_frame = 0;
  Point target;
  int target_frame = 0;
  bool is_foreground = false;

  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

using CorrespondenceSet = std::vector<Correspondence>;

/// Per-frame binary foreground masks at pixel resolution.
struct MaskStack {
  int num_frames = 0;
  Resolution resolution;
  std::vector<std::uint8_t> data;

  MaskStack() = default;
  MaskStack(int frames, Resolution res)
      : num_frames(frames),
        resolution(res),
        data(static_cast<std::size_t>(frames) * res.height * res.width, 0) {}

  bool at(int frame, int row, int col) const {
    return data[(static_cast<std::size_t>(frame) * resolution.height + row) * resolution.width +
                col] != 0;
  }
  void set(int frame, int row, int col, bool value) {
    data[(static_cast<std::size_t>(frame) * resolution.height + row) * resolution.width + col] =
        value ? 1 : 0;
  }
  /// Nearest-pixel lookup; false outside the image.
  bool contains(int frame, Point p) const;
  double area(int frame) const;

  friend bool operator==(const MaskStack&, const MaskStack&) = default;
};

FeatureVolume to_features(const MaskStack& masks);
MaskStack to_masks(const FeatureVolume& volume);

}  // namespace t4g
