#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydrarec {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s);

// Dense row-major array of 64-bit reals. A scalar has an empty shape.
struct Tensor {
    Shape shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), 0.0) {
        validate_shape();
    }
    Tensor(Shape s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        validate_shape();
        if (static_cast<int64_t>(v.size()) != shape_numel(shape))
            throw std::invalid_argument("Tensor: " + std::to_string(v.size()) +
                                        " values for shape " + shape_str(shape));
    }

    static Tensor scalar(double x) {
        Tensor t;
        t.v = {x};
        return t;
    }

    int64_t size() const { return static_cast<int64_t>(v.size()); }
    bool is_scalar() const { return shape.empty(); }
    double item() const {
        if (v.size() != 1) throw std::logic_error("Tensor::item on non-scalar");
        return v[0];
    }

    int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
    int64_t cols() const {
        if (shape.size() == 2) return shape[1];
        if (shape.size() == 1) return shape[0];
        return 1;
    }

    double& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols() + c)]; }
    double at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols() + c)]; }

private:
    void validate_shape() const {
        for (int64_t e : shape)
            if (e <= 0) throw std::invalid_argument("Tensor: nonpositive extent in " + shape_str(shape));
    }
};

// Throws if any entry is NaN or Inf.
void require_finite(const Tensor& t, const std::string& where);

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace hydrarec
