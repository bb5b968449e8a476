#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace has8 {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Trailing-dimension broadcasting. Throws ShapeError naming both shapes.
Shape broadcast_shapes(const Shape& a, const Shape& b);

}  // namespace has8
