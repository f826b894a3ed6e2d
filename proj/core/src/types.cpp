#include "t4g/types.hpp"

#include <cmath>
#include <string>

#include "t4g/error.hpp"

namespace t4g {

double norm(Point p) { return std::hypot(p.x, p.y); }

namespace {

std::size_t checked_volume_size(int frames, int height, int width, int channels) {
  if (frames < 0 || height < 0 || width < 0 || channels < 0) {
    fail(ErrorCode::validation, "negative volume dimension");
  }
  return static_cast<std::size_t>(frames) * height * width * channels;
}

}  // namespace

template <typename T>
BasicVolume<T>::BasicVolume(int frames, int height, int width, int channels, T fill)
    : frames_(frames),
      height_(height),
      width_(width),
      channels_(channels),
      data_(checked_volume_size(frames, height, width, channels), fill) {}

template <typename T>
BasicVolume<T>::BasicVolume(int frames, int height, int width, int channels, std::vector<T> data)
    : frames_(frames), height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (data_.size() != checked_volume_size(frames, height, width, channels)) {
    fail(ErrorCode::length, "volume data length " + std::to_string(data_.size()) +
                                " does not match dimensions");
  }
}

template class BasicVolume<float>;
template class BasicVolume<double>;

Tensor to_tensor(const FeatureVolume& volume) {
  std::vector<double> data(volume.values().begin(), volume.values().end());
  return Tensor(volume.frames(), volume.height(), volume.width(), volume.channels(),
                std::move(data));
}

FeatureVolume to_features(const Tensor& tensor) {
  std::vector<float> data(tensor.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(tensor.values()[i]);
  return FeatureVolume(tensor.frames(), tensor.height(), tensor.width(), tensor.channels(),
                       std::move(data));
}

void validate(const FeatureVolume& volume) {
  if (volume.frames() < 1 || volume.height() < 1 || volume.width() < 1 ||
      volume.channels() < 1) {
    fail(ErrorCode::validation, "feature volume has an empty dimension");
  }
  if (volume.size() != volume.frame_size() * volume.frames()) {
    fail(ErrorCode::validation, "feature volume data length mismatch");
  }
  for (std::size_t i = 0; i < volume.size(); ++i) {
    if (!std::isfinite(volume.values()[i])) {
      fail(ErrorCode::validation, "non-finite feature at flat index " + std::to_string(i));
    }
  }
}

void validate(const TrackSet& set) {
  if (set.num_frames < 1) fail(ErrorCode::validation, "track set needs at least one frame");
  if (set.resolution.height < 1 || set.resolution.width < 1) {
    fail(ErrorCode::validation, "track set resolution must be positive");
  }
  for (std::size_t t = 0; t < set.tracks.size(); ++t) {
    const Track& track = set.tracks[t];
    const std::string where = "track " + std::to_string(t);
    if (static_cast<int>(track.positions.size()) != set.num_frames) {
      fail(ErrorCode::validation, where + ": positions length != num_frames");
    }
    if (static_cast<int>(track.visible.size()) != set.num_frames) {
      fail(ErrorCode::validation, where + ": visible length != num_frames");
    }
    if (track.query_frame < 0 || track.query_frame >= set.num_frames) {
      fail(ErrorCode::validation, where + ": query_frame out of range");
    }
    if (!track.visible[track.query_frame]) {
      fail(ErrorCode::validation, where + ": not visible at its query frame");
    }
    for (int n = 0; n < set.num_frames; ++n) {
      const Point p = track.positions[n];
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        fail(ErrorCode::validation, where + ": non-finite position at frame " + std::to_string(n));
      }
      if (track.visible[n] && !set.resolution.contains(p)) {
        fail(ErrorCode::validation,
             where + ": visible position outside the image at frame " + std::to_string(n));
      }
    }
  }
}

void validate(const FlowPyramid& flows) {
  if (flows.num_frames < 1) fail(ErrorCode::validation, "flow pyramid needs at least one frame");
  if (flows.resolution.height < 1 || flows.resolution.width < 1) {
    fail(ErrorCode::validation, "flow resolution must be positive");
  }
  const auto expected = static_cast<std::size_t>(flows.num_frames - 1);
  if (flows.forward.size() != expected) {
    fail(ErrorCode::validation, "forward flow count " + std::to_string(flows.forward.size()) +
                                    " != num_frames - 1");
  }
  if (flows.backward.size() != expected) {
    fail(ErrorCode::validation, "backward flow count " + std::to_string(flows.backward.size()) +
                                    " != num_frames - 1");
  }
  const auto check = [&](const FlowField& f, const char* dir, std::size_t i) {
    if (f.height != flows.resolution.height || f.width != flows.resolution.width ||
        f.data.size() != static_cast<std::size_t>(f.height) * f.width * 2) {
      fail(ErrorCode::validation, std::string(dir) + " flow " + std::to_string(i) +
                                      " has the wrong shape");
    }
    for (float v : f.data) {
      if (!std::isfinite(v)) {
        fail(ErrorCode::validation,
             std::string(dir) + " flow " + std::to_string(i) + " has a non-finite entry");
      }
    }
  };
  for (std::size_t i = 0; i < flows.forward.size(); ++i) check(flows.forward[i], "forward", i);
  for (std::size_t i = 0; i < flows.backward.size(); ++i) check(flows.backward[i], "backward", i);
}

bool MaskStack::contains(int frame, Point p) const {
  const long col = std::lround(p.x);
  const long row = std::lround(p.y);
  if (col < 0 || row < 0 || col >= resolution.width || row >= resolution.height) return false;
  return at(frame, static_cast<int>(row), static_cast<int>(col));
}

double MaskStack::area(int frame) const {
  const std::size_t plane = static_cast<std::size_t>(resolution.height) * resolution.width;
  double total = 0.0;
  for (std::size_t i = 0; i < plane; ++i) total += data[frame * plane + i] != 0 ? 1.0 : 0.0;
  return total;
}

FeatureVolume to_features(const MaskStack& masks) {
  FeatureVolume out(masks.num_frames, masks.resolution.height, masks.resolution.width, 1);
  for (std::size_t i = 0; i < masks.data.size(); ++i) out.values()[i] = masks.data[i] ? 1.0f : 0.0f;
  return out;
}

MaskStack to_masks(const FeatureVolume& volume) {
  if (volume.channels() != 1) fail(ErrorCode::validation, "mask volume must have one channel");
  MaskStack masks(volume.frames(), volume.grid());
  for (std::size_t i = 0; i < volume.size(); ++i) masks.data[i] = volume.values()[i] > 0.5f ? 1 : 0;
  return masks;
}

}  // namespace t4g
