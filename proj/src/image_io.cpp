#include "dcha/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dcha {

namespace {

unsigned char quantize(double v) {
  double c = std::min(1.0, std::max(0.0, v));
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

int read_pnm_int(std::istream& is) {
  // skips whitespace and '#' comments
  for (;;) {
    int ch = is.peek();
    if (ch == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      break;
    }
  }
  int v = -1;
  is >> v;
  return v;
}

}  // namespace

void write_pgm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(bool(os), "io", "cannot open for writing: " + path);
  os << "P5\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> row(img.w);
  for (int r = 0; r < img.h; ++r) {
    for (int c = 0; c < img.w; ++c) row[c] = quantize(img.at(r, c));
    os.write(reinterpret_cast<const char*>(row.data()), img.w);
  }
  require(bool(os), "io", "write failure: " + path);
}

Image read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "io", "cannot open: " + path);
  std::string magic;
  is >> magic;
  require(magic == "P5", "format", path + " is not a binary P5 graymap");
  int w = read_pnm_int(is);
  int h = read_pnm_int(is);
  int maxval = read_pnm_int(is);
  require(w > 0 && h > 0, "format", "bad dimensions in " + path);
  require(maxval == 255, "format", "only 8-bit graymaps supported: " + path);
  is.get();  // single whitespace after header
  std::vector<unsigned char> raw(std::size_t(w) * h);
  is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  require(bool(is), "format", "truncated graymap: " + path);
  Image img(h, w);
  for (std::size_t i = 0; i < raw.size(); ++i) img.v[i] = double(raw[i]) / 255.0;
  return img;
}

void write_ppm(const std::string& path, const Image& r, const Image& g, const Image& b) {
  require(r.h == g.h && r.h == b.h && r.w == g.w && r.w == b.w, "shape",
          "ppm planes must share dimensions");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(bool(os), "io", "cannot open for writing: " + path);
  os << "P6\n" << r.w << " " << r.h << "\n255\n";
  std::vector<unsigned char> row(std::size_t(r.w) * 3);
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) {
      row[3 * x + 0] = quantize(r.at(y, x));
      row[3 * x + 1] = quantize(g.at(y, x));
      row[3 * x + 2] = quantize(b.at(y, x));
    }
    os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  require(bool(os), "io", "write failure: " + path);
}

}  // namespace dcha
