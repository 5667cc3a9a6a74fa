#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "spectrum/dtype.hpp"

namespace spectrum {

// One named tensor, decoded to 32-bit floats in row-major order.
struct TensorRecord {
    std::string name;
    std::vector<std::size_t> shape;
    Dtype dtype = Dtype::f32;
    std::vector<float> values;
    // Count of NaN/inf values found while decoding; > 0 flags the record.
    std::size_t nonfinite_count = 0;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
    bool is_flagged() const { return nonfinite_count > 0; }
};

} // namespace spectrum
