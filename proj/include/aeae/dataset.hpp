#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aeae/models.hpp"

namespace aeae {

/// Images in [0,1] as [C, H, W] tensors, with optional class labels.
struct Dataset {
  std::string name;
  std::string source;
  ImageShape shape;
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;  ///< empty, or one per image

  std::size_t size() const { return images.size(); }
  bool labelled() const { return !labels.empty(); }
  /// Throws unless every image has `shape` and labels line up.
  void validate() const;
  /// First `count` images (and labels).
  Dataset head(std::size_t count) const;
  /// Rows `begin` .. `end` (exclusive).
  Dataset slice(std::size_t begin, std::size_t end) const;
  std::size_t class_count() const;
};

/// IDX parsing failures, split by cause.
class IdxError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, Truncated, CountMismatch, Unsupported };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Parses IDX image data (dims N,H,W or N,H,W,C) and optional label data
/// (magic 0x801). Unsigned-byte images (magic 0x803/0x804) are scaled by
/// 1/255; float64 images (type code 0x0E) are taken as-is.
Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::optional<std::span<const std::uint8_t>> label_bytes);
Dataset load_idx(const std::string& images_path,
                 const std::optional<std::string>& labels_path = std::nullopt);

enum class IdxPixels { UByte, Float64 };

/// Inverse of parse_idx. UByte rounds pixels to 256 levels; Float64 is
/// lossless and is what adversarial outputs use.
std::vector<std::uint8_t> encode_idx_images(const Dataset& data, IdxPixels pixels);
std::vector<std::uint8_t> encode_idx_labels(const Dataset& data);
void save_idx(const Dataset& data, IdxPixels pixels, const std::string& images_path,
              const std::optional<std::string>& labels_path = std::nullopt);

/// FNV-1a digest over shape, pixel bits and labels.
std::uint64_t dataset_digest(const Dataset& data);

struct SynthOptions {
  std::size_t size = 16;  ///< square side, multiple of 4
  std::size_t classes = 10;
  double noise = 0.02;
  double contrast = 0.15;  ///< mean shape brightness above background, jittered +-30%
};

/// Labelled geometric shapes (bars, crosses, rings, boxes, ...) with jittered
/// position, scale, contrast and background. Label i % classes for image i,
/// so classes are balanced within one.
Dataset synth_dataset(const std::string& kind, std::size_t count, std::uint64_t seed,
                      const SynthOptions& options = {});

}  // namespace aeae
