#include "rcav/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "rcav/errors.hpp"
#include "rcav/hashing.hpp"
#include "rcav/linalg.hpp"
#include "rcav/random.hpp"
#include "rcav/tensor_io.hpp"

namespace rcav {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double phase_for(std::uint64_t seed, std::size_t i) {
  std::mt19937_64 rng(derive_seed(seed ^ 0x7e47u, i));
  return uniform(rng, 0.0, 2.0 * std::numbers::pi);
}

ShapeKind shape_for_class(std::size_t k) {
  switch (k) {
    case 0: return ShapeKind::t_polygon;
    case 1: return ShapeKind::ellipse;
    default: return ShapeKind::rectangle;
  }
}

}  // namespace

Tensor procedural_mask(ShapeKind kind, std::size_t height, std::size_t width, std::mt19937_64& rng) {
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  const double cy = (h - 1.0) / 2.0 + uniform(rng, -0.08, 0.08) * h;
  const double cx = (w - 1.0) / 2.0 + uniform(rng, -0.08, 0.08) * w;
  Tensor m({1, height, width});
  auto px = m.data();
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) px[r * width + c] = 0.0f;
  }
  switch (kind) {
    case ShapeKind::ellipse: {
      const double ry = uniform(rng, 0.22, 0.34) * h, rx = uniform(rng, 0.16, 0.28) * w;
      for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
          const double dy = (static_cast<double>(r) - cy) / ry, dx = (static_cast<double>(c) - cx) / rx;
          if (dy * dy + dx * dx <= 1.0) px[r * width + c] = 1.0f;
        }
      }
      break;
    }
    case ShapeKind::rectangle: {
      const double hy = uniform(rng, 0.16, 0.3) * h, hx = uniform(rng, 0.16, 0.3) * w;
      for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
          if (std::abs(static_cast<double>(r) - cy) <= hy && std::abs(static_cast<double>(c) - cx) <= hx) {
            px[r * width + c] = 1.0f;
          }
        }
      }
      break;
    }
    case ShapeKind::t_polygon: {
      const double total = uniform(rng, 0.55, 0.7) * h;
      const double bar_h = uniform(rng, 0.14, 0.2) * h;
      const double bar_half = uniform(rng, 0.28, 0.38) * w;
      const double stem_half = uniform(rng, 0.1, 0.14) * w;
      const double top = cy - total / 2.0;
      for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
          const double y = static_cast<double>(r) - top, x = std::abs(static_cast<double>(c) - cx);
          const bool bar = y >= 0.0 && y <= bar_h && x <= bar_half;
          const bool stem = y >= 0.0 && y <= total && x <= stem_half;
          if (bar || stem) px[r * width + c] = 1.0f;
        }
      }
      break;
    }
  }
  return m;
}

Tensor masks_from_images(const Tensor& images) {
  if (images.rank() != 4) throw DimensionError("masks_from_images expects [n,c,h,w]");
  const std::size_t n = images.dim(0), c = images.dim(1), hw = images.dim(2) * images.dim(3);
  Tensor m({n, 1, images.dim(2), images.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    auto src = images.row(i);
    auto dst = m.row(i);
    for (std::size_t p = 0; p < hw; ++p) {
      bool on = false;
      for (std::size_t ch = 0; ch < c; ++ch) on = on || src[ch * hw + p] != 0.0f;
      dst[p] = on ? 1.0f : 0.0f;
    }
  }
  return m;
}

ShapeSource procedural_shapes(std::size_t per_class, std::size_t class_count, std::size_t height, std::size_t width,
                              std::uint64_t seed) {
  if (per_class == 0 || class_count < 2) throw ConfigError("procedural_shapes needs per_class >= 1 and >= 2 classes");
  ShapeSource s;
  s.class_count = class_count;
  const std::size_t n = per_class * class_count;
  std::vector<Tensor> masks;
  masks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % class_count;
    std::mt19937_64 rng(derive_seed(seed, i));
    masks.push_back(procedural_mask(shape_for_class(k), height, width, rng));
    s.labels.push_back(k);
  }
  s.masks = stack(masks);
  s.images = Tensor({n, 1, height, width});
  return s;
}

ShapeSource shapes_from_dataset(const Dataset& data) {
  data.validate();
  return {data.images, masks_from_images(data.images), data.labels, data.class_count};
}

Dataset make_textured_dataset(const ShapeSource& source, const TextureAssignment& assignment, std::uint64_t seed,
                              Split split) {
  for (std::size_t k = 0; k < source.class_count; ++k) {
    if (!assignment.contains(k)) throw ConfigError("texture assignment is missing class " + std::to_string(k));
  }
  const std::size_t n = source.labels.size();
  const std::size_t c = source.images.dim(1), h = source.images.dim(2), w = source.images.dim(3);
  Dataset d;
  d.split = split;
  d.class_count = source.class_count;
  for (std::size_t k = 0; k < d.class_count; ++k) d.class_names.push_back(std::string(texture_name(assignment.at(k))));
  d.images = source.images;
  d.masks = source.masks;
  d.labels = source.labels;
  for (std::size_t i = 0; i < n; ++i) {
    const auto field = default_texture(assignment.at(source.labels[i]), phase_for(seed, i));
    d.textures.push_back(field);
    d.concept_tags.emplace_back(texture_name(field.kind));
    auto img = d.images.row(i);
    auto mk = source.masks.row(i);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < w; ++col) {
        if (mk[r * w + col] == 0.0f) continue;
        const auto v = static_cast<float>(field.value(static_cast<double>(r), static_cast<double>(col), h, w));
        for (std::size_t ch = 0; ch < c; ++ch) img[ch * h * w + r * w + col] = v;
      }
    }
  }
  d.validate();
  return d;
}

double blend_texture_value(const TextureField& from, const TextureField& to, double lambda, std::size_t row,
                           std::size_t col, std::size_t height, std::size_t width) {
  const auto r = static_cast<double>(row), c = static_cast<double>(col);
  return (1.0 - lambda) * from.value(r, c, height, width) + lambda * to.value(r, c, height, width);
}

Tensor interpolate_texture(const Tensor& image, const Tensor& mask, const TextureField& from, const TextureField& to,
                           double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("texture lambda must lie in [0,1]");
  if (image.rank() != 3 || mask.rank() != 3 || mask.dim(0) != 1 || mask.dim(1) != image.dim(1) ||
      mask.dim(2) != image.dim(2)) {
    throw DimensionError("interpolate_texture: image " + shape_string(image.shape()) + " vs mask " +
                         shape_string(mask.shape()));
  }
  Tensor out = image;
  if (lambda == 0.0) return out;
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t col = 0; col < w; ++col) {
      if (mask[r * w + col] == 0.0f) continue;
      const auto v = static_cast<float>(blend_texture_value(from, to, lambda, r, col, h, w));
      for (std::size_t ch = 0; ch < c; ++ch) out[ch * h * w + r * w + col] = v;
    }
  }
  return out;
}

Tensor contrast_augment(const Tensor& image, double delta) {
  if (!(delta > -1.0)) throw ConfigError("contrast delta must be > -1");
  Tensor out = image;
  if (delta == 0.0 || image.empty()) return out;
  double mu = 0.0;
  for (float v : image.data()) mu += v;
  mu /= static_cast<double>(image.size());
  for (auto& v : out.data()) v = static_cast<float>(std::clamp(mu + (1.0 + delta) * (v - mu), 0.0, 1.0));
  return out;
}

double image_std(std::span<const float> image) {
  double mu = 0.0;
  for (float v : image) mu += v;
  mu /= static_cast<double>(image.size());
  double ss = 0.0;
  for (float v : image) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(image.size()));
}

Dataset procedural_tissue(std::size_t per_class, std::size_t class_count, std::size_t height, std::size_t width,
                          const TissueParams& p, std::uint64_t seed, Split split) {
  if (per_class == 0 || class_count < 2) throw ConfigError("procedural_tissue needs per_class >= 1 and >= 2 classes");
  if (p.nucleus_sigma_low.size() < class_count || p.nucleus_sigma_high.size() < class_count) {
    throw ConfigError("tissue nucleus sizes must cover every class");
  }
  const std::size_t n = per_class * class_count, hw = height * width;
  Dataset d;
  d.split = split;
  d.class_count = class_count;
  d.class_names = {"normal", "tumor"};
  for (std::size_t k = 2; k < class_count; ++k) d.class_names.push_back("class" + std::to_string(k));
  std::vector<float> px(n * hw);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % class_count;
    std::mt19937_64 rng(derive_seed(seed, i));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> img(hw);
    const double bg = uniform(rng, p.background_low, p.background_high);
    const double gy = uniform(rng, -0.03, 0.03), gx = uniform(rng, -0.03, 0.03);
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        img[r * width + c] = bg + gy * (static_cast<double>(r) / height - 0.5) + gx * (static_cast<double>(c) / width - 0.5);
      }
    }
    for (int wave = 0; wave < 4; ++wave) {
      const double period = uniform(rng, 3.0, 7.0), angle = uniform(rng, 0.0, std::numbers::pi);
      const double ky = std::sin(angle) * 2.0 * std::numbers::pi / period;
      const double kx = std::cos(angle) * 2.0 * std::numbers::pi / period;
      const double ph = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
          img[r * width + c] += 0.5 * p.stroma_amplitude * std::sin(ky * r + kx * c + ph);
        }
      }
    }
    const auto count = std::uniform_int_distribution<std::size_t>(p.nuclei_min, p.nuclei_max)(rng);
    for (std::size_t j = 0; j < count; ++j) {
      const double ny = uniform(rng, 2.0, height - 3.0), nx = uniform(rng, 2.0, width - 3.0);
      const double sigma = uniform(rng, p.nucleus_sigma_low[k], p.nucleus_sigma_high[k]);
      const double dark = uniform(rng, p.darkness_low, p.darkness_high);
      for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
          const double dy = static_cast<double>(r) - ny, dx = static_cast<double>(c) - nx;
          img[r * width + c] -= dark * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        }
      }
    }
    for (auto& v : img) v += p.noise * gauss(rng);
    const double factor = uniform(rng, p.contrast_low, p.contrast_high);
    const double mu = std::accumulate(img.begin(), img.end(), 0.0) / static_cast<double>(hw);
    for (std::size_t q = 0; q < hw; ++q) {
      px[i * hw + q] = static_cast<float>(std::clamp(mu + factor * (img[q] - mu), 0.0, 1.0));
    }
    d.labels.push_back(k);
  }
  d.images = Tensor({n, 1, height, width}, std::move(px));
  d.validate();
  return d;
}

Dataset make_contrast_biased_dataset(const Dataset& source, std::size_t biased_class, double train_delta) {
  if (biased_class >= source.class_count) {
    throw ConfigError("biased_class " + std::to_string(biased_class) + " is not a valid class");
  }
  Dataset d = source;
  d.augmented.assign(d.size(), 0);
  if (d.split != Split::train || train_delta == 0.0) return d;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.labels[i] != biased_class) continue;
    const Tensor aug = contrast_augment(d.image(i), train_delta);
    std::copy(aug.values().begin(), aug.values().end(), d.images.row(i).begin());
    d.augmented[i] = 1;
  }
  return d;
}

Tensor Augmenter::apply(const Dataset& data, std::size_t i) const {
  switch (kind) {
    case Kind::identity: return data.image(i);
    case Kind::contrast: return contrast_augment(data.image(i), delta);
    case Kind::texture: {
      if (data.textures.empty() || data.masks.empty()) throw DataError("texture augmenter needs masks and textures");
      const auto& from = data.textures.at(i);
      return interpolate_texture(data.image(i), data.mask(i), from, default_texture(target, from.phase), lambda);
    }
  }
  throw ConfigError("unknown augmenter");
}

Dataset Augmenter::apply_all(const Dataset& data) const {
  Dataset out = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor img = apply(data, i);
    std::copy(img.values().begin(), img.values().end(), out.images.row(i).begin());
  }
  return out;
}

nlohmann::json Augmenter::to_json() const {
  switch (kind) {
    case Kind::identity: return {{"kind", "identity"}};
    case Kind::contrast: return {{"kind", "contrast"}, {"delta", delta}};
    case Kind::texture: return {{"kind", "texture"}, {"lambda", lambda}, {"target", texture_name(target)}};
  }
  return {};
}

std::vector<double> ground_truth_sensitivity(const nn::Model& model, const Dataset& val, const Augmenter& augmenter,
                                             std::size_t class_k) {
  if (class_k >= model.class_count()) throw IndexError("class_k out of range");
  const Dataset aug = augmenter.apply_all(val);
  const Tensor before = model.logits(val.images);
  const Tensor after = model.logits(aug.images);
  std::vector<double> out(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) {
    out[i] = softmax_probability(after.row(i), class_k) - softmax_probability(before.row(i), class_k);
  }
  return out;
}

std::string_view benchmark_name(BenchmarkKind kind) {
  return kind == BenchmarkKind::textured ? "textured" : "contrast";
}

BenchmarkKind parse_benchmark(std::string_view name) {
  if (name == "textured") return BenchmarkKind::textured;
  if (name == "contrast") return BenchmarkKind::contrast;
  throw ConfigError("unknown benchmark kind: " + std::string(name));
}

std::size_t BenchmarkConfig::class_k() const {
  if (kind == BenchmarkKind::contrast) return biased_class;
  for (const auto& [k, tex] : assignment) {
    if (tex != target_texture) return k;
  }
  throw ConfigError("every class already carries the target texture");
}

Augmenter BenchmarkConfig::augmenter() const {
  Augmenter a;
  if (kind == BenchmarkKind::contrast) {
    a.kind = Augmenter::Kind::contrast;
    a.delta = delta;
  } else {
    a.kind = Augmenter::Kind::texture;
    a.lambda = lambda;
    a.target = target_texture;
  }
  return a;
}

nlohmann::json BenchmarkConfig::to_json() const {
  nlohmann::json j = {{"kind", benchmark_name(kind)}, {"train_per_class", train_per_class},
                      {"val_per_class", val_per_class}, {"height", height}, {"width", width}, {"seed", seed}};
  if (kind == BenchmarkKind::textured) {
    nlohmann::json a = nlohmann::json::object();
    for (const auto& [k, tex] : assignment) a[std::to_string(k)] = texture_name(tex);
    j["assignment"] = a;
    j["lambda"] = lambda;
    j["target_texture"] = texture_name(target_texture);
  } else {
    j["biased_class"] = biased_class;
    j["train_delta"] = train_delta;
    j["delta"] = delta;
    const auto& t = tissue;
    j["tissue"] = {{"background", {t.background_low, t.background_high}},
                   {"nucleus_sigma_low", t.nucleus_sigma_low},
                   {"nucleus_sigma_high", t.nucleus_sigma_high},
                   {"nuclei", {t.nuclei_min, t.nuclei_max}},
                   {"darkness", {t.darkness_low, t.darkness_high}},
                   {"stroma_amplitude", t.stroma_amplitude},
                   {"noise", t.noise},
                   {"contrast", {t.contrast_low, t.contrast_high}}};
  }
  return j;
}

BenchmarkBundle make_benchmark(const BenchmarkConfig& cfg) {
  BenchmarkBundle b;
  b.config = cfg;
  b.augmenter = cfg.augmenter();
  b.class_k = cfg.class_k();
  const std::size_t classes = cfg.kind == BenchmarkKind::textured ? std::max<std::size_t>(2, cfg.assignment.size()) : 2;
  const std::uint64_t train_seed = derive_seed(cfg.seed, 1), val_seed = derive_seed(cfg.seed, 2);
  if (cfg.kind == BenchmarkKind::textured) {
    b.train = make_textured_dataset(procedural_shapes(cfg.train_per_class, classes, cfg.height, cfg.width, train_seed),
                                    cfg.assignment, train_seed, Split::train);
    b.val = make_textured_dataset(procedural_shapes(cfg.val_per_class, classes, cfg.height, cfg.width, val_seed),
                                  cfg.assignment, val_seed, Split::val);
  } else {
    const auto train_src =
        procedural_tissue(cfg.train_per_class, classes, cfg.height, cfg.width, cfg.tissue, train_seed, Split::train);
    b.train = make_contrast_biased_dataset(train_src, cfg.biased_class, cfg.train_delta);
    b.val = make_contrast_biased_dataset(
        procedural_tissue(cfg.val_per_class, classes, cfg.height, cfg.width, cfg.tissue, val_seed, Split::val),
        cfg.biased_class, cfg.train_delta);
  }
  return b;
}

void attach_ground_truth(BenchmarkBundle& bundle, const nn::Model& model) {
  bundle.ground_truth = ground_truth_sensitivity(model, bundle.val, bundle.augmenter, bundle.class_k);
}

ConceptSet contrast_concept_set(const Dataset& val, std::size_t per_class, ConceptSetLimits limits) {
  std::vector<double> stat(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) stat[i] = image_std(val.images.row(i));
  return concept_set_by_statistic(val, stat, per_class, "high_contrast", "low_contrast", limits);
}

namespace {

Tensor render_texture(const Dataset& val, std::size_t i, TextureField field) {
  Tensor img = val.image(i);
  const Tensor mk = val.mask(i);
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t col = 0; col < w; ++col) {
      if (mk[r * w + col] == 0.0f) continue;
      const auto v = static_cast<float>(field.value(static_cast<double>(r), static_cast<double>(col), h, w));
      for (std::size_t ch = 0; ch < c; ++ch) img[ch * h * w + r * w + col] = v;
    }
  }
  return img;
}

Tensor overlay_texture(const Dataset& val, std::size_t i, TextureField field, double opacity, std::mt19937_64& rng) {
  Tensor img = val.image(i);
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  const double cy = uniform(rng, 0.3, 0.7) * h, cx = uniform(rng, 0.3, 0.7) * w;
  const double rad = uniform(rng, 0.25, 0.4) * std::min(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t col = 0; col < w; ++col) {
      const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(col) - cx;
      if (dy * dy + dx * dx > rad * rad) continue;
      const double t = field.value(static_cast<double>(r), static_cast<double>(col), h, w);
      for (std::size_t ch = 0; ch < c; ++ch) {
        float& v = img[ch * h * w + r * w + col];
        v = static_cast<float>(std::clamp((1.0 - opacity) * v + opacity * t, 0.0, 1.0));
      }
    }
  }
  return img;
}

// Two disjoint per_class draws of every class, from a seeded shuffle.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> balanced_draw(const Dataset& val, std::size_t per_class,
                                                                            std::uint64_t seed) {
  std::vector<std::size_t> a, b;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < val.class_count; ++k) {
    auto idx = val.indices_of_class(k);
    if (idx.size() < 2 * per_class) {
      throw DataError("class " + std::to_string(k) + " has " + std::to_string(idx.size()) +
                      " val samples; concept set needs " + std::to_string(2 * per_class));
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    a.insert(a.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
    b.insert(b.end(), idx.begin() + static_cast<std::ptrdiff_t>(per_class),
             idx.begin() + static_cast<std::ptrdiff_t>(2 * per_class));
  }
  return {a, b};
}

std::vector<std::size_t> labels_of(const Dataset& val, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  for (auto i : idx) out.push_back(val.labels[i]);
  return out;
}

}  // namespace

ConceptSet texture_concept_set(const Dataset& val, TextureKind target, const std::vector<TextureKind>& others,
                               std::size_t per_class, std::uint64_t seed, ConceptSetLimits limits) {
  if (others.empty()) throw ConfigError("texture concept set needs at least one contrasting texture");
  if (val.masks.empty()) throw DataError("texture concept set needs masks");
  const auto [pos, neg] = balanced_draw(val, per_class, seed);
  std::vector<Tensor> p, q;
  for (std::size_t j = 0; j < pos.size(); ++j) {
    p.push_back(render_texture(val, pos[j], default_texture(target, phase_for(seed, j))));
    q.push_back(render_texture(val, neg[j], default_texture(others[j % others.size()], phase_for(seed, pos.size() + j))));
  }
  std::string other_name;
  for (auto o : others) other_name += (other_name.empty() ? "" : "+") + std::string(texture_name(o));
  return ConceptSet({std::string(texture_name(target)), other_name}, {stack(p), stack(q)},
                    {labels_of(val, pos), labels_of(val, neg)}, 0, val.class_count, limits);
}

ConceptSet overlay_concept_set(const Dataset& val, TextureKind target, const std::vector<TextureKind>& others,
                               std::size_t per_class, double opacity, std::uint64_t seed, ConceptSetLimits limits) {
  if (others.empty()) throw ConfigError("overlay concept set needs at least one contrasting texture");
  if (!(opacity > 0.0 && opacity <= 1.0)) throw ConfigError("overlay opacity must lie in (0,1]");
  const auto [pos, neg] = balanced_draw(val, per_class, seed);
  std::vector<Tensor> p, q;
  std::mt19937_64 rng(derive_seed(seed, 99));
  for (std::size_t j = 0; j < pos.size(); ++j) {
    p.push_back(overlay_texture(val, pos[j], default_texture(target, phase_for(seed, j)), opacity, rng));
    q.push_back(overlay_texture(val, neg[j], default_texture(others[j % others.size()], phase_for(seed, pos.size() + j)),
                                opacity, rng));
  }
  std::string other_name;
  for (auto o : others) other_name += (other_name.empty() ? "" : "+") + std::string(texture_name(o));
  return ConceptSet({std::string(texture_name(target)), other_name}, {stack(p), stack(q)},
                    {labels_of(val, pos), labels_of(val, neg)}, 0, val.class_count, limits);
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir, const nlohmann::json& params) {
  data.validate();
  nlohmann::json files = nlohmann::json::object();
  auto put = [&](const std::string& name, const Tensor& t) {
    const auto bytes = encode_tensor(t);
    write_file_bytes(dir / name, bytes);
    files[name] = sha256_hex(std::span<const std::uint8_t>(bytes));
  };
  put("images.rcvt", data.images);
  std::vector<float> lab(data.labels.begin(), data.labels.end());
  put("labels.rcvt", Tensor({data.size()}, std::move(lab)));
  if (!data.masks.empty()) put("masks.rcvt", data.masks);
  nlohmann::json tex = nlohmann::json::array();
  for (const auto& t : data.textures) {
    tex.push_back({{"kind", texture_name(t.kind)}, {"period", t.period}, {"phase", t.phase}, {"amplitude", t.amplitude}});
  }
  nlohmann::json m = {{"format", "rcav-dataset"},
                      {"version", 1},
                      {"split", split_name(data.split)},
                      {"size", data.size()},
                      {"image_shape", data.image_shape()},
                      {"class_count", data.class_count},
                      {"class_names", data.class_names},
                      {"concept_tags", data.concept_tags},
                      {"augmented", data.augmented},
                      {"textures", tex},
                      {"params", params},
                      {"files", files}};
  const auto text = m.dump(2) + "\n";
  write_file_bytes(dir / "manifest.json",
                   std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto raw = read_file_bytes(dir / "manifest.json");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (m.value("format", "") != "rcav-dataset") throw FormatError((dir / "manifest.json").string() + ": not a dataset");
  auto get = [&](const std::string& name) {
    const auto bytes = read_file_bytes(dir / name);
    if (sha256_hex(std::span<const std::uint8_t>(bytes)) != m["files"].at(name).get<std::string>()) {
      throw FormatError((dir / name).string() + ": sha256 mismatch");
    }
    return decode_tensor(bytes);
  };
  Dataset d;
  d.split = m.at("split") == "train" ? Split::train : Split::val;
  d.class_count = m.at("class_count");
  d.class_names = m.at("class_names").get<std::vector<std::string>>();
  d.concept_tags = m.at("concept_tags").get<std::vector<std::string>>();
  d.augmented = m.at("augmented").get<std::vector<std::uint8_t>>();
  d.images = get("images.rcvt");
  const Tensor labels = get("labels.rcvt");
  for (float v : labels.data()) d.labels.push_back(static_cast<std::size_t>(v));
  if (m["files"].contains("masks.rcvt")) d.masks = get("masks.rcvt");
  for (const auto& t : m.at("textures")) {
    d.textures.push_back({parse_texture(t.at("kind").get<std::string>()), t.at("period"), t.at("phase"),
                          t.at("amplitude")});
  }
  d.validate();
  return d;
}

}  // namespace rcav
