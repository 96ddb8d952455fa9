#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace rcav {

enum class TextureKind { stripe, dot, zigzag, spiral };

std::string_view texture_name(TextureKind kind);
TextureKind parse_texture(std::string_view name);  // ConfigError on unknown names

// Analytic intensity pattern on the pixel grid. Values lie in [0,1]:
// 0.5 +/- 0.5*amplitude around a unit-range carrier.
struct TextureField {
  TextureKind kind = TextureKind::stripe;
  double period = 6.0;     // pixels
  double phase = 0.0;      // radians
  double amplitude = 1.0;  // in [0,1]

  // Intensity at pixel (row, col) of an image with the given size.
  double value(double row, double col, std::size_t height, std::size_t width) const;

  friend bool operator==(const TextureField&, const TextureField&) = default;
};

// Default period per kind.
TextureField default_texture(TextureKind kind, double phase = 0.0);

}  // namespace rcav
