#include "astar/masks.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "astar/attention.hpp"
#include "astar/losses.hpp"
#include "astar/pgm.hpp"

namespace astar {

bool BinaryMask::empty() const {
  return std::none_of(cells.begin(), cells.end(), [](std::uint8_t c) { return c != 0; });
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](std::uint8_t c) { return c != 0; }));
}

std::optional<Rect> BinaryMask::bounds() const {
  std::optional<Rect> box;
  for (std::size_t r = 0; r < resolution; ++r)
    for (std::size_t c = 0; c < resolution; ++c) {
      if (!at(r, c)) continue;
      if (!box) {
        box = Rect{r, c, r, c};
      } else {
        box->row0 = std::min(box->row0, r);
        box->row1 = std::max(box->row1, r);
        box->col0 = std::min(box->col0, c);
        box->col1 = std::max(box->col1, c);
      }
    }
  return box;
}

std::vector<double> BinaryMask::as_values() const { return std::vector<double>(cells.begin(), cells.end()); }

BinaryMask BinaryMask::filled(std::size_t resolution, const Rect& rect) {
  BinaryMask m;
  m.resolution = resolution;
  m.cells.assign(resolution * resolution, 0);
  for (std::size_t r = rect.row0; r <= rect.row1; ++r)
    for (std::size_t c = rect.col0; c <= rect.col1; ++c) m.cells[r * resolution + c] = 1;
  return m;
}

BinaryMask binarize_bbox(const std::vector<double>& map, std::size_t resolution, double tau_frac) {
  if (!(tau_frac > 0.0 && tau_frac < 1.0)) throw std::invalid_argument("tau_frac must lie in (0, 1)");
  if (map.size() != resolution * resolution) throw std::invalid_argument("binarize_bbox: map size mismatch");
  BinaryMask out;
  out.resolution = resolution;
  out.cells.assign(map.size(), 0);
  const double peak = *std::max_element(map.begin(), map.end());
  if (!(peak > 0.0)) return out;

  const double tau = tau_frac * peak;
  BinaryMask hits = out;
  for (std::size_t i = 0; i < map.size(); ++i) hits.cells[i] = map[i] >= tau ? 1 : 0;
  if (const auto box = hits.bounds()) {
    BinaryMask filled = BinaryMask::filled(resolution, *box);
    out.cells = std::move(filled.cells);
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw LayoutError("layout line " + std::to_string(line) + ": " + msg);
}

}  // namespace

LayoutMasks parse_layout(std::istream& in, const std::filesystem::path& base_dir, const ConceptSet& concepts,
                         std::size_t resolution) {
  std::vector<std::optional<BinaryMask>> found(concepts.size());
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) fail(lineno, "expected '<concept>: rect ...' or '<concept>: bitmap ...'");
    const std::string name = trim(line.substr(0, colon));
    const auto idx = concepts.index_of(name);
    if (!idx) fail(lineno, "unknown concept '" + name + "'");
    if (found[*idx]) fail(lineno, "concept '" + name + "' given twice");

    std::istringstream rest(line.substr(colon + 1));
    std::string kind;
    rest >> kind;
    BinaryMask mask;
    if (kind == "rect") {
      long long v[4];
      for (auto& x : v)
        if (!(rest >> x)) fail(lineno, "rect needs four integers r0 c0 r1 c1");
      std::string extra;
      if (rest >> extra) fail(lineno, "trailing text '" + extra + "'");
      const long long r = static_cast<long long>(resolution);
      if (v[0] < 0 || v[1] < 0 || v[2] >= r || v[3] >= r || v[0] > v[2] || v[1] > v[3]) {
        fail(lineno, "rectangle " + std::to_string(v[0]) + " " + std::to_string(v[1]) + " " + std::to_string(v[2]) +
                         " " + std::to_string(v[3]) + " out of bounds for resolution " + std::to_string(resolution));
      }
      mask = BinaryMask::filled(resolution, Rect{std::size_t(v[0]), std::size_t(v[1]), std::size_t(v[2]),
                                                 std::size_t(v[3])});
    } else if (kind == "bitmap") {
      std::string file;
      rest >> file;
      if (file.empty()) fail(lineno, "bitmap needs a path");
      std::filesystem::path p(file);
      if (p.is_relative()) p = base_dir / p;
      GrayImage img;
      try {
        img = read_pgm(p);
      } catch (const PgmError& e) {
        fail(lineno, e.what());
      }
      if (img.width != resolution || img.height != resolution) {
        fail(lineno, "bitmap is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         ", expected " + std::to_string(resolution) + "x" + std::to_string(resolution));
      }
      mask.resolution = resolution;
      mask.cells.resize(img.pixels.size());
      for (std::size_t i = 0; i < img.pixels.size(); ++i)
        mask.cells[i] = 2u * img.pixels[i] >= img.maxval ? 1 : 0;
    } else {
      fail(lineno, "unknown mask kind '" + kind + "'");
    }
    mask.concept_name = name;
    mask.source = MaskSource::UserLayout;
    found[*idx] = std::move(mask);
  }

  LayoutMasks out;
  for (std::size_t k = 0; k < concepts.size(); ++k) {
    if (!found[k]) {
      BinaryMask empty;
      empty.resolution = resolution;
      empty.cells.assign(resolution * resolution, 0);
      empty.concept_name = concepts[k].name;
      empty.source = MaskSource::UserLayout;
      found[k] = std::move(empty);
      out.warnings.push_back("concept '" + concepts[k].name + "' has no layout mask; retention skips it");
    }
    out.masks.push_back(std::move(*found[k]));
  }
  for (std::size_t a = 0; a < out.masks.size(); ++a)
    for (std::size_t b = a + 1; b < out.masks.size(); ++b) {
      const auto va = out.masks[a].as_values(), vb = out.masks[b].as_values();
      const SoftIou s = soft_iou(va, vb);
      if (s.value > 0.0) {
        out.warnings.push_back("layout masks for '" + out.masks[a].concept_name + "' and '" +
                               out.masks[b].concept_name + "' overlap (soft IoU " + std::to_string(s.value) + ")");
      }
    }
  return out;
}

LayoutMasks load_layout_masks(const std::filesystem::path& path, const ConceptSet& concepts, std::size_t resolution) {
  std::ifstream in(path);
  if (!in) throw LayoutError("cannot open layout file " + path.string());
  return parse_layout(in, path.parent_path(), concepts, resolution);
}

}  // namespace astar
