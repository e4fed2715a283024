// SPDX-License-Identifier: Apache-2.0
#include "afd/detector.hpp"

#include <cmath>

#include "afd/error.hpp"
#include "afd/rng.hpp"

namespace afd {
namespace {

constexpr double kOutputStd = 0.01;

ConvLayer make_conv(std::size_t cin, std::size_t cout, std::size_t k,
                    std::size_t stride, double sd, Rng& rng, bool rg) {
  std::vector<double> w(cout * cin * k * k);
  for (double& x : w) x = sd * rng.normal();
  return {Tensor({cout, cin, k, k}, std::move(w), rg), Tensor::zeros({cout}, rg),
          stride, k / 2};
}

ConvLayer he_conv(std::size_t cin, std::size_t cout, std::size_t k,
                  std::size_t stride, Rng& rng, bool rg) {
  return make_conv(cin, cout, k, stride,
                   std::sqrt(2.0 / static_cast<double>(cin * k * k)), rng, rg);
}

template <typename P>
auto layers(P& p) {
  std::vector<decltype(&p.head)> out;
  for (auto& l : p.backbone) out.push_back(&l);
  for (auto& l : p.lateral) out.push_back(&l);
  for (auto* l : {&p.head, &p.cls, &p.loc, &p.obj}) out.push_back(l);
  return out;
}

std::vector<std::string> layer_names(const DetectorParams& p) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < p.backbone.size(); ++i) out.push_back("backbone." + std::to_string(i));
  for (std::size_t i = 0; i < p.lateral.size(); ++i) out.push_back("lateral." + std::to_string(i));
  for (const char* n : {"head", "cls", "loc", "obj"}) out.emplace_back(n);
  return out;
}

// [N, A*D, H, W] -> [N, H*W*A, D]
Tensor flatten_level(const Tensor& x, std::size_t a) {
  const std::size_t n = x.dim(0), d = x.dim(1) / a, h = x.dim(2), w = x.dim(3);
  Tensor t = permute(reshape(x, {n, a, d, h, w}), {0, 3, 4, 1, 2});
  return reshape(t, {n, h * w * a, d});
}

Tensor row(const Tensor& x, std::size_t i) { return slice(x, 0, i, i + 1); }

std::vector<Tensor> rows(const std::vector<Tensor>& xs, std::size_t i) {
  std::vector<Tensor> out;
  for (const auto& x : xs) out.push_back(row(x, i));
  return out;
}

template <typename Get>
std::vector<Tensor> cat_levels(const std::vector<const DetectorOutput*>& parts, Get get) {
  const std::size_t levels = get(*parts.front()).size();
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<Tensor> items;
    for (const auto* p : parts) items.push_back(get(*p).at(l));
    out.push_back(items.size() == 1 ? items.front() : concat(items, 0));
  }
  return out;
}

}  // namespace

std::vector<AnchorLevel> DetectorSpec::anchor_levels() const {
  return make_anchor_levels(image_size, strides, base_sizes, anchor_scales);
}

void DetectorSpec::validate() const {
  if (channels < 2 || channels % 2 != 0) throw ConfigError("detector channels must be even and >= 2");
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  if (strides != std::vector<std::size_t>{8, 16}) {
    throw ConfigError("the backbone emits levels at strides 8 and 16 only");
  }
  if (base_sizes.size() != strides.size() || anchor_scales.empty()) {
    throw ConfigError("one base size per level and at least one anchor scale required");
  }
  if (image_size % 16 != 0) throw IndivisibleShape("image size must be a multiple of 16");
}

Tensor ConvLayer::operator()(const Tensor& x) const {
  return conv2d(x, weight, bias, stride, pad);
}

DetectorParams DetectorParams::init(const DetectorSpec& spec, std::uint64_t seed,
                                    bool rg) {
  spec.validate();
  Rng rng(seed);
  const std::size_t c = spec.channels, a = spec.num_anchors();
  DetectorParams p;
  p.backbone.push_back(he_conv(3, c / 2, 3, 2, rng, rg));
  p.backbone.push_back(he_conv(c / 2, c, 3, 2, rng, rg));
  p.backbone.push_back(he_conv(c, c, 3, 2, rng, rg));
  p.backbone.push_back(he_conv(c, c, 3, 2, rng, rg));
  p.lateral.push_back(make_conv(c, c, 1, 1, std::sqrt(1.0 / c), rng, rg));
  p.lateral.push_back(make_conv(c, c, 1, 1, std::sqrt(1.0 / c), rng, rg));
  p.head = he_conv(c, c, 3, 1, rng, rg);
  p.cls = make_conv(c, a * spec.class_outputs(), 1, 1, kOutputStd, rng, rg);
  p.loc = make_conv(c, 4 * a, 1, 1, kOutputStd, rng, rg);
  p.obj = make_conv(c, a, 1, 1, kOutputStd, rng, rg);
  return p;
}

std::vector<Tensor> DetectorParams::parameters() const {
  std::vector<Tensor> out;
  for (const ConvLayer* l : layers(*this)) {
    out.push_back(l->weight);
    out.push_back(l->bias);
  }
  return out;
}

std::vector<std::string> DetectorParams::names() const {
  std::vector<std::string> out;
  for (const auto& n : layer_names(*this)) {
    out.push_back(n + ".weight");
    out.push_back(n + ".bias");
  }
  return out;
}

void DetectorParams::add_to(Container& c, const std::string& prefix) const {
  const auto ps = parameters();
  const auto ns = names();
  for (std::size_t i = 0; i < ps.size(); ++i) c.add(prefix + ns[i], ps[i]);
}

DetectorParams DetectorParams::from(const Container& c, const std::string& prefix,
                                    const DetectorSpec& spec, bool rg) {
  DetectorParams p = init(spec, 0, rg);
  const auto ns = p.names();
  std::size_t k = 0;
  for (ConvLayer* l : layers(p)) {
    for (Tensor* t : {&l->weight, &l->bias}) {
      const Tensor& src = c.tensor(prefix + ns[k++]);
      if (src.shape() != t->shape()) {
        throw CheckpointMismatch(prefix + ns[k - 1] + " has shape " +
                                 shape_str(src.shape()) + ", expected " +
                                 shape_str(t->shape()));
      }
      *t = Tensor(src.shape(), {src.data().begin(), src.data().end()}, rg);
    }
  }
  return p;
}

DetectorOutput forward(const DetectorSpec& spec, const DetectorParams& p,
                       const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != spec.image_size ||
      images.dim(3) != spec.image_size) {
    throw ShapeMismatch("images must be [N,3," + std::to_string(spec.image_size) + "," +
                        std::to_string(spec.image_size) + "], got " +
                        shape_str(images.shape()));
  }
  Tensor x = images;
  std::vector<Tensor> stages;
  for (const auto& layer : p.backbone) {
    x = relu(layer(x));
    stages.push_back(x);
  }
  DetectorOutput out;
  out.features.push_back(p.lateral[0](stages[2]));
  out.features.push_back(p.lateral[1](stages[3]));
  for (const auto& f : out.features) {
    Tensor h = relu(p.head(f));
    out.heads.cls.push_back(p.cls(h));
    out.heads.loc.push_back(p.loc(h));
    out.heads.obj.push_back(p.obj(h));
  }
  return out;
}

FlatOutputs flatten_heads(const HeadOutputs& heads, std::size_t a) {
  std::vector<Tensor> cls, loc, obj;
  for (std::size_t l = 0; l < heads.cls.size(); ++l) {
    cls.push_back(flatten_level(heads.cls[l], a));
    loc.push_back(flatten_level(heads.loc[l], a));
    obj.push_back(flatten_level(heads.obj[l], a));
  }
  auto join = [](const std::vector<Tensor>& xs) {
    return xs.size() == 1 ? xs.front() : concat(xs, 1);
  };
  Tensor o = join(obj);
  return {join(cls), join(loc), reshape(o, {o.dim(0), o.dim(1)})};
}

DetectorOutput select_image(const DetectorOutput& out, std::size_t i) {
  return {rows(out.features, i),
          {rows(out.heads.cls, i), rows(out.heads.loc, i), rows(out.heads.obj, i)}};
}

DetectorOutput stack_outputs(const std::vector<const DetectorOutput*>& parts) {
  if (parts.empty()) throw ShapeMismatch("stack_outputs needs at least one part");
  return {cat_levels(parts, [](const DetectorOutput& o) -> const auto& { return o.features; }),
          {cat_levels(parts, [](const DetectorOutput& o) -> const auto& { return o.heads.cls; }),
           cat_levels(parts, [](const DetectorOutput& o) -> const auto& { return o.heads.loc; }),
           cat_levels(parts, [](const DetectorOutput& o) -> const auto& { return o.heads.obj; })}};
}

void spec_to_metadata(const DetectorSpec& spec, Container& c,
                      const std::string& prefix) {
  c.metadata[prefix + "channels"] = std::to_string(spec.channels);
  c.metadata[prefix + "num_classes"] = std::to_string(spec.num_classes);
  c.metadata[prefix + "image_size"] = std::to_string(spec.image_size);
}

DetectorSpec spec_from_metadata(const Container& c, const std::string& prefix) {
  DetectorSpec spec;
  try {
    spec.channels = std::stoul(c.meta(prefix + "channels"));
    spec.num_classes = std::stoul(c.meta(prefix + "num_classes"));
    spec.image_size = std::stoul(c.meta(prefix + "image_size"));
  } catch (const std::logic_error&) {
    throw CheckpointMismatch("malformed detector metadata");
  }
  spec.validate();
  return spec;
}

}  // namespace afd
