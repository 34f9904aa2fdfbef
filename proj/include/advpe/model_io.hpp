// advpe - adversarial PE manipulation toolkit
// Self-describing model container.
//
//   "ADVPEMDL" | u32 version | u32 header length | JSON header | f64 data
//
// The JSON header names the model kind, window, architecture hyperparameters
// and the shape of every stored array; data follows as little-endian doubles
// in header order. Doubles are stored bit-exactly, so save/load round-trips.

#ifndef ADVPE_MODEL_IO_HPP
#define ADVPE_MODEL_IO_HPP

#include <string>

#include "advpe/models.hpp"

namespace advpe {

inline constexpr std::uint32_t model_format_version = 1;

Bytes encode_model(const Classifier& model);
// Throws Error{ModelFormat}.
Classifier decode_model(ByteView data);

void save_model(const Classifier& model, const std::string& path);
Classifier load_model(const std::string& path);

}  // namespace advpe

#endif  // ADVPE_MODEL_IO_HPP
