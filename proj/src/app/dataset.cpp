#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <string>

#include "aeae/binary_io.hpp"
#include "aeae/dataset.hpp"

namespace aeae {

void Dataset::validate() const {
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_image_shape(images[i], shape, "dataset");
  }
  if (!labels.empty() && labels.size() != images.size()) {
    throw std::invalid_argument("dataset " + name + ": " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(images.size()) + " images");
  }
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > images.size()) {
    throw std::out_of_range("dataset slice [" + std::to_string(begin) + ", " +
                            std::to_string(end) + ") outside " + std::to_string(images.size()) +
                            " images");
  }
  Dataset out{name, source, shape, {}, {}};
  out.images.assign(images.begin() + begin, images.begin() + end);
  if (labelled()) out.labels.assign(labels.begin() + begin, labels.begin() + end);
  return out;
}

Dataset Dataset::head(std::size_t count) const { return slice(0, std::min(count, size())); }

std::size_t Dataset::class_count() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

namespace {

constexpr std::uint8_t kTypeUByte = 0x08;
constexpr std::uint8_t kTypeFloat64 = 0x0E;

// IDX is big-endian throughout.
class BigEndianReader {
 public:
  explicit BigEndianReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint64_t uint(std::size_t width) {
    need(width);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v = (v << 8) | data_[pos_++];
    return v;
  }
  double f64() {
    const std::uint64_t bits = uint(8);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) {
      throw IdxError(IdxError::Kind::Truncated,
                     "idx: file truncated at byte " + std::to_string(data_.size()));
    }
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

void put_be(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t width) {
  for (std::size_t i = width; i-- > 0;) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct IdxHeader {
  std::uint8_t type;
  std::vector<std::size_t> dims;
};

IdxHeader read_header(BigEndianReader& r, const char* what) {
  const std::uint64_t magic = r.uint(4);
  IdxHeader h{static_cast<std::uint8_t>((magic >> 8) & 0xFF), {}};
  const std::size_t rank = magic & 0xFF;
  if ((magic >> 16) != 0 || rank == 0) {
    throw IdxError(IdxError::Kind::BadMagic, std::string("idx ") + what + ": bad magic number");
  }
  for (std::size_t i = 0; i < rank; ++i) h.dims.push_back(static_cast<std::size_t>(r.uint(4)));
  return h;
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::optional<std::span<const std::uint8_t>> label_bytes) {
  BigEndianReader r(image_bytes);
  const IdxHeader h = read_header(r, "images");
  if (h.type != kTypeUByte && h.type != kTypeFloat64) {
    const bool known = h.type == 0x09 || (h.type >= 0x0B && h.type <= 0x0D);
    throw IdxError(known ? IdxError::Kind::Unsupported : IdxError::Kind::BadMagic,
                   "idx images: unsupported element type");
  }
  if (h.dims.size() != 3 && h.dims.size() != 4) {
    throw IdxError(IdxError::Kind::BadMagic, "idx images: expected 3 or 4 dimensions");
  }
  Dataset data;
  data.name = "idx";
  const std::size_t n = h.dims[0];
  data.shape = {h.dims.size() == 4 ? h.dims[3] : 1, h.dims[1], h.dims[2]};
  const std::size_t c = data.shape.channels, height = data.shape.height, w = data.shape.width;
  if (c == 0 || height == 0 || w == 0) {
    throw IdxError(IdxError::Kind::Unsupported, "idx images: zero-sized dimension");
  }
  const std::size_t elem = h.type == kTypeUByte ? 1 : 8;
  r.need(n * data.shape.pixels() * elem);
  data.images.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor img(data.shape.chw());
    // Stored as H, W, C; held as C, H, W.
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) {
          img[(ch * height + y) * w + x] =
              h.type == kTypeUByte ? static_cast<double>(r.uint(1)) / 255.0 : r.f64();
        }
    data.images.push_back(std::move(img));
  }
  if (!r.at_end()) throw IdxError(IdxError::Kind::Unsupported, "idx images: trailing bytes");

  if (label_bytes) {
    BigEndianReader lr(*label_bytes);
    const IdxHeader lh = read_header(lr, "labels");
    if (lh.type != kTypeUByte || lh.dims.size() != 1) {
      throw IdxError(IdxError::Kind::BadMagic, "idx labels: expected magic 0x00000801");
    }
    if (lh.dims[0] != n) {
      throw IdxError(IdxError::Kind::CountMismatch,
                     "idx: " + std::to_string(lh.dims[0]) + " labels for " + std::to_string(n) +
                         " images");
    }
    lr.need(n);
    for (std::size_t i = 0; i < n; ++i) data.labels.push_back(static_cast<std::size_t>(lr.uint(1)));
    if (!lr.at_end()) throw IdxError(IdxError::Kind::Unsupported, "idx labels: trailing bytes");
  }
  return data;
}

namespace {

std::vector<std::uint8_t> read_idx_file(const std::string& path) {
  try {
    return read_file_bytes(path);
  } catch (const std::runtime_error& e) {
    throw IdxError(IdxError::Kind::Io, e.what());
  }
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::optional<std::string>& labels_path) {
  const auto images = read_idx_file(images_path);
  std::vector<std::uint8_t> labels;
  if (labels_path) labels = read_idx_file(*labels_path);
  Dataset data = parse_idx(images, labels_path ? std::optional(std::span<const std::uint8_t>(labels))
                                               : std::nullopt);
  data.source = images_path;
  return data;
}

std::vector<std::uint8_t> encode_idx_images(const Dataset& data, IdxPixels pixels) {
  data.validate();
  const auto& s = data.shape;
  const bool ubyte = pixels == IdxPixels::UByte;
  std::vector<std::uint8_t> out;
  const bool rgb = s.channels != 1;
  put_be(out, (std::uint64_t{ubyte ? kTypeUByte : kTypeFloat64} << 8) | (rgb ? 4 : 3), 4);
  put_be(out, data.size(), 4);
  put_be(out, s.height, 4);
  put_be(out, s.width, 4);
  if (rgb) put_be(out, s.channels, 4);
  for (const Tensor& img : data.images) {
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x)
        for (std::size_t ch = 0; ch < s.channels; ++ch) {
          const double v = img[(ch * s.height + y) * s.width + x];
          if (ubyte) {
            out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
          } else {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            put_be(out, bits, 8);
          }
        }
  }
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const Dataset& data) {
  if (!data.labelled()) throw std::invalid_argument("dataset " + data.name + " has no labels");
  std::vector<std::uint8_t> out;
  put_be(out, 0x801, 4);
  put_be(out, data.labels.size(), 4);
  for (std::size_t l : data.labels) {
    if (l > 255) throw std::invalid_argument("idx labels must be < 256");
    out.push_back(static_cast<std::uint8_t>(l));
  }
  return out;
}

void save_idx(const Dataset& data, IdxPixels pixels, const std::string& images_path,
              const std::optional<std::string>& labels_path) {
  write_file_bytes(images_path, encode_idx_images(data, pixels));
  if (labels_path) write_file_bytes(*labels_path, encode_idx_labels(data));
}

std::uint64_t dataset_digest(const Dataset& data) {
  ByteWriter w;
  w.u64(data.shape.channels);
  w.u64(data.shape.height);
  w.u64(data.shape.width);
  w.u64(data.size());
  for (const Tensor& img : data.images)
    for (double v : img.values()) w.f64(v);
  for (std::size_t l : data.labels) w.u64(l);
  return fnv1a64(w.buffer());
}

namespace {

struct Point {
  double x, y;
};

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

// Distance from p to the outline (or, for filled shapes, the body) of shape
// `cls` centred at c with radius r and rotation theta.
double shape_distance(std::size_t cls, Point p, Point c, double r, double theta) {
  const double co = std::cos(theta), si = std::sin(theta);
  auto at = [&](double u, double v) { return Point{c.x + u * co - v * si, c.y + u * si + v * co}; };
  auto seg = [&](double u0, double v0, double u1, double v1) {
    return segment_distance(p, at(u0, v0), at(u1, v1));
  };
  const double rho = std::hypot(p.x - c.x, p.y - c.y);
  switch (cls % 10) {
    case 0: return seg(-r, 0, r, 0);
    case 1: return seg(0, -r, 0, r);
    case 2: return seg(-r, -r, r, r);
    case 3: return seg(-r, r, r, -r);
    case 4: return std::min(seg(-r, 0, r, 0), seg(0, -r, 0, r));
    case 5: return std::min(seg(-r, -r, r, r), seg(-r, r, r, -r));
    case 6:
      return std::min({seg(-r, -r, r, -r), seg(r, -r, r, r), seg(r, r, -r, r), seg(-r, r, -r, -r)});
    case 7: return std::max(0.0, rho - 0.7 * r);
    case 8: return std::fabs(rho - r);
    default: return std::min(seg(-r, -r, r, -r), seg(0, -r, 0, r));
  }
}

}  // namespace

Dataset synth_dataset(const std::string& kind, std::size_t count, std::uint64_t seed,
                      const SynthOptions& options) {
  if (kind != "shapes") throw std::invalid_argument("unknown synthetic dataset kind '" + kind + "'");
  if (count < 1) throw std::invalid_argument("synthetic dataset needs count >= 1");
  if (options.size < 8 || options.size % 4 != 0) {
    throw std::invalid_argument("synthetic image size must be a multiple of 4, >= 8");
  }
  if (options.classes < 2 || options.classes > 10) {
    throw std::invalid_argument("synthetic dataset supports 2..10 classes");
  }
  Dataset data;
  data.name = "shapes";
  data.source = "synthetic:shapes";
  const std::size_t n = options.size;
  data.shape = {1, n, n};
  const double unit = static_cast<double>(n) / 16.0;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, options.noise);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = i % options.classes;
    const Point centre{n / 2.0 + (u(rng) - 0.5) * 3.0 * unit, n / 2.0 + (u(rng) - 0.5) * 3.0 * unit};
    const double radius = (3.8 + 1.6 * u(rng)) * unit;
    const double theta = (u(rng) - 0.5) * 0.3;
    const double half_width = (0.7 + 0.4 * u(rng)) * unit;
    const double background = 0.15 + 0.25 * u(rng);
    const double contrast = options.contrast * (0.7 + 0.6 * u(rng));
    Tensor img(data.shape.chw());
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double d = shape_distance(cls, {x + 0.5, y + 0.5}, centre, radius, theta);
        const double coverage = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
        const double v = background + contrast * coverage + noise(rng);
        img[y * n + x] = std::clamp(v, 0.0, 1.0);
      }
    data.images.push_back(std::move(img));
    data.labels.push_back(cls);
  }
  return data;
}

}  // namespace aeae
