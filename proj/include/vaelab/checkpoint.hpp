#pragma once

// Binary checkpoint container. Layout (all integers little-endian u32,
// all reals little-endian IEEE-754 binary64):
//
//   "VAELABCK"                      8-byte magic
//   version                         currently 1
//   kind                            1 = point model, 2 = weight posterior
//   likelihood                      0 = bernoulli, 1 = gaussian
//   activation                      0 = tanh, 1 = sigmoid, 2 = relu
//   input_dim, latent_dim, depth, hidden_dims[depth]
//   parameter_count
//   per parameter, in model order:
//     id_length, id bytes
//     rank, dims[rank]
//     values                        numel reals; posteriors store the means
//                                   followed by rho (sigma = softplus(rho))
//
// Identical models encode to identical bytes. See docs/checkpoint_format.md.

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vaelab/full_vb.hpp"
#include "vaelab/model.hpp"

namespace vaelab {

using Checkpoint = std::variant<VaeModel, WeightPosterior>;

std::vector<std::uint8_t> encode_checkpoint(const VaeModel& model);
std::vector<std::uint8_t> encode_checkpoint(const WeightPosterior& posterior);
/// Throws FormatError (with byte offset) on any malformed input.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const VaeModel& model, const std::string& path);
void save_checkpoint(const WeightPosterior& posterior, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// The point model, or the posterior mean for a weight-posterior checkpoint.
VaeModel checkpoint_model(const Checkpoint& ckpt);

}  // namespace vaelab
