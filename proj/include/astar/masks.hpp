#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace astar {

class ConceptSet;

enum class MaskSource { Derived, UserLayout };

/// Inclusive cell rectangle.
struct Rect {
  std::size_t row0 = 0, col0 = 0, row1 = 0, col1 = 0;
  bool contains(std::size_t r, std::size_t c) const { return r >= row0 && r <= row1 && c >= col0 && c <= col1; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// r x r grid of {0, 1} proxy ground truth for one concept.
struct BinaryMask {
  std::vector<std::uint8_t> cells;  // row-major, r*r
  std::size_t resolution = 0;
  std::string concept_name;
  MaskSource source = MaskSource::Derived;
  int timestep = 0;

  bool empty() const;
  std::size_t count() const;
  bool at(std::size_t r, std::size_t c) const { return cells[r * resolution + c] != 0; }
  /// Tightest rectangle around the set cells; nullopt when empty.
  std::optional<Rect> bounds() const;
  std::vector<double> as_values() const;

  static BinaryMask filled(std::size_t resolution, const Rect& rect);
};

/// Bounding box of every cell with a >= tau_frac * max(a), filled with ones.
/// An all-zero map gives an empty mask.
BinaryMask binarize_bbox(const std::vector<double>& map, std::size_t resolution, double tau_frac);

struct LayoutMasks {
  std::vector<BinaryMask> masks;  // one per concept, in concept order
  std::vector<std::string> warnings;
};

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses lines of `<concept>: rect r0 c0 r1 c1` or `<concept>: bitmap <file.pgm>`.
/// Relative bitmap paths resolve against `base_dir`. Concepts missing from the file get
/// an empty mask and a warning; overlapping masks are accepted with a warning.
LayoutMasks parse_layout(std::istream& in, const std::filesystem::path& base_dir, const ConceptSet& concepts,
                         std::size_t resolution);
LayoutMasks load_layout_masks(const std::filesystem::path& path, const ConceptSet& concepts, std::size_t resolution);

}  // namespace astar
