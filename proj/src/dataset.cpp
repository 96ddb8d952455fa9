#include "rcav/dataset.hpp"

#include <algorithm>

#include "rcav/errors.hpp"

namespace rcav {

std::string_view split_name(Split s) { return s == Split::train ? "train" : "val"; }

Shape Dataset::image_shape() const {
  if (images.rank() != 4) throw DimensionError("dataset images must be [n,c,h,w]");
  return {images.dim(1), images.dim(2), images.dim(3)};
}

Tensor Dataset::image(std::size_t i) const {
  auto r = images.row(i);
  return Tensor(image_shape(), std::vector<float>(r.begin(), r.end()));
}

Tensor Dataset::mask(std::size_t i) const {
  if (masks.empty()) throw DataError("dataset has no masks");
  auto r = masks.row(i);
  return Tensor({masks.dim(1), masks.dim(2), masks.dim(3)}, std::vector<float>(r.begin(), r.end()));
}

void Dataset::validate() const {
  if (labels.empty()) throw DataError("dataset is empty");
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw DataError("dataset has " + std::to_string(labels.size()) + " labels but images of shape " +
                    shape_string(images.shape()));
  }
  for (auto l : labels) {
    if (l >= class_count) throw DataError("label " + std::to_string(l) + " >= class_count");
  }
  for (float v : images.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DataError("pixel value outside [0,1]");
  }
  const auto n = labels.size();
  if (!concept_tags.empty() && concept_tags.size() != n) throw DataError("concept_tags length mismatch");
  if (!augmented.empty() && augmented.size() != n) throw DataError("augmented flags length mismatch");
  if (!textures.empty() && textures.size() != n) throw DataError("textures length mismatch");
  if (!masks.empty() && (masks.rank() != 4 || masks.dim(0) != n)) throw DataError("masks shape mismatch");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.split = split;
  out.class_count = class_count;
  out.class_names = class_names;
  if (indices.empty()) return out;
  const auto row = images.row_size();
  Shape s = images.shape();
  s[0] = indices.size();
  std::vector<float> px;
  px.reserve(indices.size() * row);
  std::vector<float> mk;
  for (auto i : indices) {
    if (i >= size()) throw IndexError("subset index out of range");
    auto r = images.row(i);
    px.insert(px.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
    if (!concept_tags.empty()) out.concept_tags.push_back(concept_tags[i]);
    if (!augmented.empty()) out.augmented.push_back(augmented[i]);
    if (!textures.empty()) out.textures.push_back(textures[i]);
    if (!masks.empty()) {
      auto m = masks.row(i);
      mk.insert(mk.end(), m.begin(), m.end());
    }
  }
  out.images = Tensor(std::move(s), std::move(px));
  if (!masks.empty()) {
    Shape ms = masks.shape();
    ms[0] = indices.size();
    out.masks = Tensor(std::move(ms), std::move(mk));
  }
  return out;
}

std::vector<std::size_t> Dataset::indices_of_class(std::size_t k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == k) out.push_back(i);
  }
  return out;
}

}  // namespace rcav
