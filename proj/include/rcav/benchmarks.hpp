#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "rcav/concepts.hpp"
#include "rcav/dataset.hpp"
#include "rcav/nn.hpp"
#include "rcav/tensor.hpp"
#include "rcav/textures.hpp"

namespace rcav {

enum class ShapeKind { t_polygon, ellipse, rectangle };

// Binary {0,1} mask [1, h, w] of a randomly placed and sized shape.
Tensor procedural_mask(ShapeKind kind, std::size_t height, std::size_t width, std::mt19937_64& rng);

// Nonzero pixels of each image (any channel) become foreground.
Tensor masks_from_images(const Tensor& images);

// Images whose foreground is to be textured. Procedural sources have a zero
// background; IDX sources keep their own.
struct ShapeSource {
  Tensor images;  // [n, c, h, w]
  Tensor masks;   // [n, 1, h, w]
  std::vector<std::size_t> labels;
  std::size_t class_count = 2;
};

// per_class samples of each class; class k uses shape (t_polygon, ellipse,
// rectangle...) by index. Sample i is drawn from derive_seed(seed, i).
ShapeSource procedural_shapes(std::size_t per_class, std::size_t class_count, std::size_t height, std::size_t width,
                              std::uint64_t seed);
ShapeSource shapes_from_dataset(const Dataset& data);

using TextureAssignment = std::map<std::size_t, TextureKind>;

// Foreground pixels take the class texture (random phase per sample), the
// background is left as is. ConfigError names any class missing from the map.
Dataset make_textured_dataset(const ShapeSource& source, const TextureAssignment& assignment, std::uint64_t seed,
                              Split split);

// (1 - lambda) * from + lambda * to at one pixel, in double.
double blend_texture_value(const TextureField& from, const TextureField& to, double lambda, std::size_t row,
                           std::size_t col, std::size_t height, std::size_t width);

// Foreground pixels := blend; background untouched. lambda outside [0,1] is a
// ConfigError and lambda == 0 returns the image unchanged.
Tensor interpolate_texture(const Tensor& image, const Tensor& mask, const TextureField& from, const TextureField& to,
                           double lambda);

// clip(mu + (1 + delta)(x - mu), 0, 1) with mu the image mean.
Tensor contrast_augment(const Tensor& image, double delta);

double image_std(std::span<const float> image);

struct TissueParams {
  double background_low = 0.5;
  double background_high = 0.6;
  std::vector<double> nucleus_sigma_low = {1.0, 2.2};   // per class
  std::vector<double> nucleus_sigma_high = {1.5, 3.0};  // per class
  std::size_t nuclei_min = 7;
  std::size_t nuclei_max = 7;
  double darkness_low = 0.3;
  double darkness_high = 0.32;
  double stroma_amplitude = 0.06;  // fine sinusoidal background pattern
  double noise = 0.02;
  double contrast_low = 0.6;  // per-image contrast factor range
  double contrast_high = 1.0;
};

// Procedural stand-in for stained tissue patches, [n, 1, h, w], per_class of
// each class.
Dataset procedural_tissue(std::size_t per_class, std::size_t class_count, std::size_t height, std::size_t width,
                          const TissueParams& params, std::uint64_t seed, Split split);

// Train images of biased_class get contrast_augment(train_delta) and an
// augmented flag; everything else, and any val split, is copied verbatim.
Dataset make_contrast_biased_dataset(const Dataset& source, std::size_t biased_class, double train_delta);

struct Augmenter {
  enum class Kind { identity, contrast, texture };
  Kind kind = Kind::identity;
  double delta = 0.03;                      // contrast
  double lambda = 0.1;                      // texture
  TextureKind target = TextureKind::zigzag; // texture; phase follows the sample

  Tensor apply(const Dataset& data, std::size_t i) const;
  Dataset apply_all(const Dataset& data) const;
  nlohmann::json to_json() const;
};

// f^k(augment(x)) - f^k(x) per sample, in double.
std::vector<double> ground_truth_sensitivity(const nn::Model& model, const Dataset& val, const Augmenter& augmenter,
                                             std::size_t class_k);

enum class BenchmarkKind { textured, contrast };

std::string_view benchmark_name(BenchmarkKind kind);
BenchmarkKind parse_benchmark(std::string_view name);

struct BenchmarkConfig {
  BenchmarkKind kind = BenchmarkKind::contrast;
  std::size_t train_per_class = 1000;
  std::size_t val_per_class = 250;
  std::size_t height = 32;
  std::size_t width = 32;
  std::uint64_t seed = 0;
  // textured
  TextureAssignment assignment = {{0, TextureKind::spiral}, {1, TextureKind::zigzag}};
  double lambda = 0.1;
  TextureKind target_texture = TextureKind::zigzag;
  // contrast
  std::size_t biased_class = 1;
  double train_delta = 0.5;
  double delta = 0.03;
  TissueParams tissue;

  std::size_t class_k() const;  // class whose score is probed
  Augmenter augmenter() const;
  nlohmann::json to_json() const;
};

struct BenchmarkBundle {
  BenchmarkConfig config;
  Dataset train;
  Dataset val;
  Augmenter augmenter;
  std::size_t class_k = 0;
  std::vector<double> ground_truth;  // filled by attach_ground_truth for a trained model
};

BenchmarkBundle make_benchmark(const BenchmarkConfig& cfg);
void attach_ground_truth(BenchmarkBundle& bundle, const nn::Model& model);

// Target concept: the per_class highest-std val images of each class; other
// concept: the per_class lowest.
ConceptSet contrast_concept_set(const Dataset& val, std::size_t per_class, ConceptSetLimits limits = {});

// Val masks re-rendered with `target` for the first concept and cycling
// through `others` for the second; per_class masks of each class per concept,
// chosen by a seeded shuffle.
ConceptSet texture_concept_set(const Dataset& val, TextureKind target, const std::vector<TextureKind>& others,
                               std::size_t per_class, std::uint64_t seed, ConceptSetLimits limits = {});

// Each val image of the chosen indices overlaid, inside a random disc, by a
// texture at `opacity`; used for concepts the model never saw.
ConceptSet overlay_concept_set(const Dataset& val, TextureKind target, const std::vector<TextureKind>& others,
                               std::size_t per_class, double opacity, std::uint64_t seed,
                               ConceptSetLimits limits = {});

// Directory with manifest.json (sizes, class names, parameters, sha256 per
// file) and RCVT tensors for images, labels and optional masks.
void save_dataset(const Dataset& data, const std::filesystem::path& dir, const nlohmann::json& params = {});
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace rcav
