#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace refnut::rng {

using Engine = std::mt19937_64;

// Derives an independent sub-stream seed from the root seed, a stream name and indices.
std::uint64_t derive(std::uint64_t root, std::string_view name,
                     std::initializer_list<std::uint64_t> idx = {});

inline Engine engine(std::uint64_t root, std::string_view name,
                     std::initializer_list<std::uint64_t> idx = {}) {
    return Engine(derive(root, name, idx));
}

std::vector<double> std_normals(Engine& eng, std::size_t n);

}  // namespace refnut::rng
