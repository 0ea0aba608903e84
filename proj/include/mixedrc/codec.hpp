#pragma once

#include <cstdint>
#include <vector>

#include "mixedrc/tensor.hpp"

namespace mixedrc::codec {

// Hermetic intra-only codec: 8x8 block DCT per channel, uniform
// quantization with step 2^((qp-4)/6), zigzag + run-length + varint
// entropy coding. Deterministic; decode inverts the quantized
// coefficients losslessly.
std::vector<uint8_t> toy_encode(const Clip& clip, int qp);
Clip toy_decode(const std::vector<uint8_t>& data);

std::vector<uint8_t> toy_encode_frame(const Tensor& frame, int qp);

double quant_step(int qp);

}  // namespace mixedrc::codec
