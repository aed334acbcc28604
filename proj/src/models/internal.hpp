#pragma once

#include <random>

#include "aeae/models.hpp"

namespace aeae {

AutoencoderModel make_autoencoder(const ImageShape& input, std::size_t filters,
                                  ParameterSet params);
ClassifierModel make_classifier(const ClassifierArch& arch, ParameterSet params);

/// He-normal kernel initialisation with fan-in from all but the first axis.
Tensor he_normal(Shape shape, std::mt19937_64& rng);

}  // namespace aeae
