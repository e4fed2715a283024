// SPDX-License-Identifier: Apache-2.0
#include "afd/scene.hpp"

#include <algorithm>
#include <cmath>

#include "afd/error.hpp"
#include "afd/rng.hpp"

namespace afd {
namespace {

constexpr int kPlacementTries = 200;

// Coverage of the shape at local pixel (x, y) of a d x d cell; 0 = empty,
// otherwise a texture factor in (0, 1].
double shape_texel(ShapeKind kind, int x, int y, int d) {
  const double c = 0.5 * d;
  const double px = x + 0.5 - c, py = y + 0.5 - c;
  const double r2 = px * px + py * py;
  switch (kind) {
    case ShapeKind::kDisk:
      return r2 <= c * c ? 1.0 : 0.0;
    case ShapeKind::kSquare:
      return (y / 2) % 2 == 0 ? 1.0 : 0.45;
    case ShapeKind::kCross: {
      const double half = std::max(1.0, d / 6.0);
      if (std::fabs(px) > half && std::fabs(py) > half) return 0.0;
      return 1.0;
    }
    case ShapeKind::kTriangle:
      // apex at the top row, full width at the bottom row
      return std::fabs(px) <= 0.5 * (y + 1) ? 1.0 : 0.0;
    case ShapeKind::kRing:
      return r2 <= c * c && r2 >= 0.25 * c * c ? 1.0 : 0.0;
  }
  return 0.0;
}

bool overlaps(const Box& a, const std::vector<SceneObject>& placed) {
  for (const auto& o : placed) {
    const Box& b = o.box;
    if (a.x_min < b.x_max + 1 && b.x_min < a.x_max + 1 && a.y_min < b.y_max + 1 &&
        b.y_min < a.y_max + 1) {
      return true;
    }
  }
  return false;
}

}  // namespace

void SceneConfig::validate() const {
  if (num_classes < 2 || num_classes > 5) throw ConfigError("num_classes must be in 2..5");
  if (min_objects < 1 || max_objects < min_objects) {
    throw ConfigError("object count range must satisfy 1 <= min <= max");
  }
  if (min_size < 6 || max_size < min_size || max_size > image_size) {
    throw ConfigError("object size range must satisfy 6 <= min <= max <= image size");
  }
  if (noise_sigma < 0.0) throw ConfigError("noise sigma must be nonnegative");
}

Scene gen_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  const int s = static_cast<int>(cfg.image_size);
  Scene scene;
  scene.seed = seed;
  scene.image.assign(3 * cfg.image_size * cfg.image_size, cfg.background);

  const auto count = static_cast<std::size_t>(rng.integer(
      static_cast<std::int64_t>(cfg.min_objects), static_cast<std::int64_t>(cfg.max_objects)));
  for (std::size_t k = 0; k < count; ++k) {
    const int cls = static_cast<int>(rng.integer(0, static_cast<std::int64_t>(cfg.num_classes) - 1));
    const int d = static_cast<int>(rng.integer(static_cast<std::int64_t>(cfg.min_size),
                                               static_cast<std::int64_t>(cfg.max_size)));
    int x0 = 0, y0 = 0;
    for (int t = 0; t < kPlacementTries; ++t) {
      x0 = static_cast<int>(rng.integer(0, s - d));
      y0 = static_cast<int>(rng.integer(0, s - d));
      const Box cell{double(x0), double(y0), double(x0 + d), double(y0 + d)};
      if (!overlaps(cell, scene.objects)) break;
    }
    double color[3];
    for (double& c : color) c = rng.uniform(0.55, 1.0);

    int xmin = s, ymin = s, xmax = -1, ymax = -1;
    for (int y = 0; y < d; ++y) {
      for (int x = 0; x < d; ++x) {
        const double f = shape_texel(static_cast<ShapeKind>(cls), x, y, d);
        if (f <= 0.0) continue;
        const int ix = x0 + x, iy = y0 + y;
        for (int ch = 0; ch < 3; ++ch) {
          scene.image[(static_cast<std::size_t>(ch) * s + iy) * s + ix] = color[ch] * f;
        }
        xmin = std::min(xmin, ix);
        ymin = std::min(ymin, iy);
        xmax = std::max(xmax, ix);
        ymax = std::max(ymax, iy);
      }
    }
    scene.objects.push_back(
        {cls, Box{double(xmin), double(ymin), double(xmax + 1), double(ymax + 1)}});
  }

  if (cfg.noise_sigma > 0.0) {
    for (double& v : scene.image) {
      v = std::clamp(v + cfg.noise_sigma * rng.normal(), 0.0, 1.0);
    }
  }
  return scene;
}

std::vector<Scene> gen_dataset(std::uint64_t dataset_seed, std::size_t count,
                               const SceneConfig& cfg) {
  std::vector<Scene> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(gen_scene(derive_seed(dataset_seed, "scene", i), cfg));
  }
  return out;
}

Tensor batch_images(const std::vector<Scene>& scenes,
                    const std::vector<std::size_t>& indices,
                    std::size_t image_size) {
  const std::size_t plane = 3 * image_size * image_size;
  std::vector<double> data;
  data.reserve(indices.size() * plane);
  for (std::size_t i : indices) {
    const auto& img = scenes.at(i).image;
    if (img.size() != plane) throw ShapeMismatch("scene image size mismatch");
    data.insert(data.end(), img.begin(), img.end());
  }
  return Tensor({indices.size(), 3, image_size, image_size}, std::move(data));
}

Container dataset_to_container(const std::vector<Scene>& scenes,
                               const SceneConfig& cfg) {
  const std::size_t n = scenes.size(), m = cfg.max_objects, s = cfg.image_size;
  std::vector<double> images, boxes(n * m * 4, 0.0), classes(n * m, 0.0), counts(n, 0.0);
  images.reserve(n * 3 * s * s);
  for (std::size_t i = 0; i < n; ++i) {
    const Scene& sc = scenes[i];
    if (sc.objects.size() > m) throw ShapeMismatch("scene exceeds max_objects");
    images.insert(images.end(), sc.image.begin(), sc.image.end());
    counts[i] = static_cast<double>(sc.objects.size());
    for (std::size_t k = 0; k < sc.objects.size(); ++k) {
      const Box& b = sc.objects[k].box;
      double* dst = &boxes[(i * m + k) * 4];
      dst[0] = b.x_min;
      dst[1] = b.y_min;
      dst[2] = b.x_max;
      dst[3] = b.y_max;
      classes[i * m + k] = sc.objects[k].cls;
    }
  }
  Container c;
  c.add("images", Tensor({n, 3, s, s}, std::move(images)));
  c.add("boxes", Tensor({n, m, 4}, std::move(boxes)));
  c.add("classes", Tensor({n, m}, std::move(classes)));
  c.add("counts", Tensor({n}, std::move(counts)));
  c.metadata["kind"] = "dataset";
  c.metadata["num_classes"] = std::to_string(cfg.num_classes);
  return c;
}

std::vector<Scene> dataset_from_container(const Container& c) {
  const Tensor& images = c.tensor("images");
  const Tensor& boxes = c.tensor("boxes");
  const Tensor& classes = c.tensor("classes");
  const Tensor& counts = c.tensor("counts");
  if (images.rank() != 4 || boxes.rank() != 3 || classes.rank() != 2 ||
      counts.rank() != 1) {
    throw CheckpointMismatch("dataset tensors have unexpected ranks");
  }
  const std::size_t n = images.dim(0), m = boxes.dim(1);
  const std::size_t plane = images.dim(1) * images.dim(2) * images.dim(3);
  std::vector<Scene> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].image.assign(images.data().begin() + i * plane,
                        images.data().begin() + (i + 1) * plane);
    const auto k_count = static_cast<std::size_t>(counts[i]);
    if (k_count > m) throw CheckpointMismatch("object count exceeds table width");
    for (std::size_t k = 0; k < k_count; ++k) {
      const double* b = boxes.data().data() + (i * m + k) * 4;
      out[i].objects.push_back(
          {static_cast<int>(classes[i * m + k]), Box{b[0], b[1], b[2], b[3]}});
    }
  }
  return out;
}

}  // namespace afd
