#include "astar/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

namespace astar {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

std::size_t parse_header_number(std::istream& in, const std::filesystem::path& path, const char* what) {
  const std::string tok = header_token(in);
  try {
    std::size_t pos = 0;
    const unsigned long v = std::stoul(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw PgmError(path.string() + ": bad " + what + " '" + tok + "'");
  }
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PgmError(path.string() + ": cannot open");
  const std::string magic = header_token(in);
  if (magic != "P2" && magic != "P5") throw PgmError(path.string() + ": not a graymap (magic '" + magic + "')");

  GrayImage img;
  img.width = parse_header_number(in, path, "width");
  img.height = parse_header_number(in, path, "height");
  const std::size_t maxval = parse_header_number(in, path, "maxval");
  if (maxval == 0 || maxval > 65535) throw PgmError(path.string() + ": maxval out of range");
  img.maxval = static_cast<unsigned>(maxval);
  const std::size_t count = img.width * img.height;
  img.pixels.resize(count);

  if (magic == "P2") {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t v = parse_header_number(in, path, "pixel");
      if (v > maxval) throw PgmError(path.string() + ": pixel value " + std::to_string(v) + " exceeds maxval");
      img.pixels[i] = static_cast<std::uint16_t>(v);
    }
  } else {
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(count * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw PgmError(path.string() + ": truncated raster");
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned v = bytes == 1 ? raw[i] : (unsigned(raw[2 * i]) << 8) | raw[2 * i + 1];
      if (v > maxval) throw PgmError(path.string() + ": pixel value " + std::to_string(v) + " exceeds maxval");
      img.pixels[i] = static_cast<std::uint16_t>(v);
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.maxval != 255) throw PgmError("write_pgm: only maxval 255 is written");
  if (image.pixels.size() != image.width * image.height) throw PgmError("write_pgm: pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PgmError(path.string() + ": cannot open for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  for (std::uint16_t p : image.pixels) out.put(static_cast<char>(p));
  if (!out) throw PgmError(path.string() + ": write failed");
}

std::uint8_t gray_level(double v) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

GrayImage heatmap(std::span<const double> values, std::size_t resolution) {
  if (values.size() != resolution * resolution) throw PgmError("heatmap: value count does not match resolution");
  GrayImage img{resolution, resolution, 255, {}};
  img.pixels.reserve(values.size());
  for (double v : values) img.pixels.push_back(gray_level(v));
  return img;
}

}  // namespace astar
