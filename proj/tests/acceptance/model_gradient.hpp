#pragma once

// End-to-end gradient check of a tiny model, compiled against the
// double-precision build of the library. Deliberately free of library types
// so the single-precision suite can call it.

#include <string>

struct ModelGradientResult {
    bool passed = false;
    double worst = 0.0;
    std::string report;
};

ModelGradientResult tiny_model_gradient_check(double tol, unsigned model_seed);
