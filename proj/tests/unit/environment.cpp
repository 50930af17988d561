#include <gtest/gtest.h>

#include "hdi/numcore/tensor.hpp"

namespace {

// Unit tests compare against scalar oracles, so they run in 64-bit storage;
// tests that need 32-bit open their own PrecisionScope.
class Float64 : public ::testing::Environment {
public:
    void SetUp() override { hdi::numcore::set_precision(hdi::numcore::Precision::F64); }
};

[[maybe_unused]] const auto* const kEnv = ::testing::AddGlobalTestEnvironment(new Float64);

}  // namespace
