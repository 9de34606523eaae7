#pragma once
#include <Eigen/Core>
#include <cmath>
#include <string>

#include "emx/errors.hpp"

namespace emx {

using Index = Eigen::Index;

// Matricization target: a p1 x p2 matrix holding a vector of length d = p1*p2.
struct Shape {
    Index p1 = 0;
    Index p2 = 0;

    constexpr Index d() const { return p1 * p2; }
    constexpr bool square() const { return p1 == p2; }
    bool operator==(const Shape&) const = default;

    static Shape checked(Index p1, Index p2) {
        if (p1 < 1 || p2 < 1)
            throw ShapeError("shape dimensions must be >= 1, got " + std::to_string(p1) + "x" +
                             std::to_string(p2));
        return Shape{p1, p2};
    }

    Shape checked() const { return checked(p1, p2); }

    // When only d is given we require a perfect square rather than guessing factors.
    static Shape square_of(Index d) {
        if (d < 1) throw ShapeError("dimension must be >= 1, got " + std::to_string(d));
        Index p = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(d))));
        while (p * p < d) ++p;
        while (p > 1 && p * p > d) --p;
        if (p * p != d)
            throw ShapeError("dimension " + std::to_string(d) +
                             " is not a perfect square; pass an explicit shape (--shape p1 p2)");
        return Shape{p, p};
    }
};

}  // namespace emx
