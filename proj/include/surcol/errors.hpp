#pragma once

#include <stdexcept>
#include <string>

namespace surcol {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- thermo ----
struct CompositionInvalid : Error {
    using Error::Error;
};
struct AnchorDegenerate : Error {
    using Error::Error;
};
struct NonPositiveVaporPressure : Error {
    using Error::Error;
};
struct NonPhysical : Error {
    using Error::Error;
};

// Iterative solve ran out of budget. Carries the final residual so callers
// can log how close the solve got.
struct NoConvergence : Error {
    NoConvergence(const std::string& what, double residual_, int iterations_)
        : Error(what), residual(residual_), iterations(iterations_) {}
    double residual = 0.0;
    int iterations = 0;
};

// ---- column ----
struct InvalidSpec : Error {
    using Error::Error;
};

// ---- datagen ----
struct EmptyOutput : Error {
    using Error::Error;
};

// ---- surrogate ----
struct ShapeMismatch : Error {
    using Error::Error;
};
struct DivergedLoss : Error {
    DivergedLoss(const std::string& what, int epoch_) : Error(what), epoch(epoch_) {}
    int epoch = 0;
};
struct TooFewSamples : Error {
    using Error::Error;
};
struct CheckpointInvalid : Error {
    using Error::Error;
};

// ---- flowsheet ----
struct TearNoConvergence : Error {
    using Error::Error;
};
struct ColumnNoConvergence : Error {
    ColumnNoConvergence(const std::string& what, int column_) : Error(what), column(column_) {}
    int column = 0;  // 0-based index of the failing column
};
struct ClosureNoConvergence : Error {
    using Error::Error;
};

// ---- pareto ----
struct Infeasible : Error {
    using Error::Error;
};
struct BudgetExhausted : Error {
    using Error::Error;
};
struct EmptyFrontier : Error {
    using Error::Error;
};

// ---- IO / schema ----
struct DataError : Error {
    using Error::Error;
};

}  // namespace surcol
