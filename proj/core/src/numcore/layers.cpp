#include "hdi/numcore/layers.hpp"

namespace hdi::numcore {

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
               bool with_bias) {
    weight = store.add(name + ".weight", trunc_normal({in, out}, kInitStd, rng));
    if (with_bias) bias = store.add(name + ".bias", Tensor({out}, 0.0));
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t channels) {
    gamma = store.add(name + ".gamma", Tensor({channels}, 1.0));
    beta = store.add(name + ".beta", Tensor({channels}, 0.0));
}

BatchNorm::BatchNorm(ParamStore& store, const std::string& name, std::size_t channels) {
    gamma = store.add(name + ".gamma", Tensor({channels}, 1.0));
    beta = store.add(name + ".beta", Tensor({channels}, 0.0));
    stats.running_mean = store.add_buffer(name + ".running_mean", Tensor({channels}, 0.0));
    stats.running_var = store.add_buffer(name + ".running_var", Tensor({channels}, 1.0));
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
               std::size_t s, std::size_t p, std::mt19937_64& rng)
    : kernel(k), stride(s), pad(p) {
    weight = store.add(name + ".weight", trunc_normal({k * k * in, out}, kInitStd, rng));
    bias = store.add(name + ".bias", Tensor({out}, 0.0));
}

}  // namespace hdi::numcore
