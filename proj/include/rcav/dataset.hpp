#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rcav/tensor.hpp"
#include "rcav/textures.hpp"

namespace rcav {

enum class Split { train, val };

std::string_view split_name(Split s);

// Images in [0,1] with class labels. The optional columns are either empty or
// hold one entry per sample.
struct Dataset {
  Tensor images;  // [n, c, h, w]
  std::vector<std::size_t> labels;
  Split split = Split::train;
  std::size_t class_count = 2;
  std::vector<std::string> class_names;

  std::vector<std::string> concept_tags;
  std::vector<std::uint8_t> augmented;  // 1 where a counterfactual transform was applied
  Tensor masks;                          // [n, 1, h, w] foreground masks, or empty
  std::vector<TextureField> textures;    // foreground texture per sample, or empty

  std::size_t size() const { return labels.size(); }
  Shape image_shape() const;  // [c, h, w]
  Tensor image(std::size_t i) const;
  Tensor mask(std::size_t i) const;

  // Throws DataError when labels/optional columns disagree with the image count,
  // a label is out of range, or a pixel leaves [0,1].
  void validate() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> indices_of_class(std::size_t k) const;
};

}  // namespace rcav
