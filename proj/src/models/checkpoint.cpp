#include <algorithm>
#include <array>

#include "aeae/binary_io.hpp"
#include "internal.hpp"

// Layout (all integers little-endian):
//   "AEAE" | u32 version | u32 model kind | architecture u32s |
//   u32 parameter count | per parameter: name, u32 rank, u64 dims, f64 values

namespace aeae {
namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'A', 'E', 'A', 'E'};
constexpr std::uint32_t kKindAutoencoder = 1;
constexpr std::uint32_t kKindClassifier = 2;

void write_header(ByteWriter& w, std::uint32_t kind) {
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(kind);
}

void write_params(ByteWriter& w, const ParameterSet& params) {
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.u64(d);
    for (double v : p.value.values()) w.f64(v);
  }
}

void read_header(ByteReader& r, std::uint32_t expected_kind) {
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
    throw CheckpointError(CheckpointError::Kind::Version, "checkpoint: bad magic bytes");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::Version,
                          "checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::uint32_t kind = r.u32();
  if (kind != expected_kind) {
    throw CheckpointError(CheckpointError::Kind::WrongModel,
                          "checkpoint: holds model kind " + std::to_string(kind) +
                              ", expected " + std::to_string(expected_kind));
  }
}

// Reads parameters and checks them against the freshly built reference layout.
ParameterSet read_params(ByteReader& r, const ParameterSet& reference) {
  const std::uint32_t count = r.u32();
  if (count != reference.size()) {
    throw CheckpointError(CheckpointError::Kind::Corrupt,
                          "checkpoint: parameter count " + std::to_string(count) +
                              " does not match architecture");
  }
  ParameterSet params;
  for (const auto& ref : reference) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint: bad rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    if (name != ref.name || shape != ref.value.shape()) {
      throw CheckpointError(CheckpointError::Kind::Corrupt,
                            "checkpoint: parameter '" + name + "' " + shape_to_string(shape) +
                                " does not match architecture");
    }
    Tensor value(shape);
    for (double& v : value.values()) v = r.f64();
    params.push_back({std::move(name), std::move(value)});
  }
  if (!r.at_end()) {
    throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint: trailing bytes");
  }
  return params;
}

std::size_t read_dim(ByteReader& r) {
  const std::uint32_t v = r.u32();
  if (v == 0 || v > (1u << 16)) {
    throw CheckpointError(CheckpointError::Kind::Corrupt,
                          "checkpoint: implausible architecture value " + std::to_string(v));
  }
  return v;
}

template <typename F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const TruncatedInput& e) {
    throw CheckpointError(CheckpointError::Kind::Corrupt,
                          std::string("checkpoint truncated: ") + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError(CheckpointError::Kind::Corrupt,
                          std::string("checkpoint architecture invalid: ") + e.what());
  }
}

std::vector<std::uint8_t> read_or_throw(const std::string& path) {
  try {
    return read_file_bytes(path);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(CheckpointError::Kind::Io, e.what());
  }
}

void write_or_throw(const std::string& path, std::span<const std::uint8_t> bytes) {
  try {
    write_file_bytes(path, bytes);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(CheckpointError::Kind::Io, e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const AutoencoderModel& model) {
  ByteWriter w;
  write_header(w, kKindAutoencoder);
  const ImageShape& s = model.input_shape();
  for (std::size_t v : {s.channels, s.height, s.width, model.filters()}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  write_params(w, model.parameters());
  return w.take();
}

std::vector<std::uint8_t> serialize_model(const ClassifierModel& model) {
  ByteWriter w;
  write_header(w, kKindClassifier);
  const ClassifierArch& a = model.arch();
  for (std::size_t v : {a.input.channels, a.input.height, a.input.width, a.conv1_filters,
                        a.conv2_filters, a.classes}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  write_params(w, model.parameters());
  return w.take();
}

AutoencoderModel deserialize_autoencoder(std::span<const std::uint8_t> bytes) {
  return guarded([&] {
    ByteReader r(bytes);
    read_header(r, kKindAutoencoder);
    ImageShape shape;
    shape.channels = read_dim(r);
    shape.height = read_dim(r);
    shape.width = read_dim(r);
    const std::size_t filters = read_dim(r);
    auto reference = AutoencoderModel::build(shape, filters);
    return make_autoencoder(shape, filters, read_params(r, reference.parameters()));
  });
}

ClassifierModel deserialize_classifier(std::span<const std::uint8_t> bytes) {
  return guarded([&] {
    ByteReader r(bytes);
    read_header(r, kKindClassifier);
    ClassifierArch arch;
    arch.input.channels = read_dim(r);
    arch.input.height = read_dim(r);
    arch.input.width = read_dim(r);
    arch.conv1_filters = read_dim(r);
    arch.conv2_filters = read_dim(r);
    arch.classes = read_dim(r);
    auto reference = ClassifierModel::build(arch);
    return make_classifier(arch, read_params(r, reference.parameters()));
  });
}

void save_model(const AutoencoderModel& model, const std::string& path) {
  write_or_throw(path, serialize_model(model));
}

void save_model(const ClassifierModel& model, const std::string& path) {
  write_or_throw(path, serialize_model(model));
}

AutoencoderModel load_autoencoder(const std::string& path) {
  return deserialize_autoencoder(read_or_throw(path));
}

ClassifierModel load_classifier(const std::string& path) {
  return deserialize_classifier(read_or_throw(path));
}

}  // namespace aeae
