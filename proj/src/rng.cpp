#include "refnut/rng.hpp"

namespace refnut::rng {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive(std::uint64_t root, std::string_view name,
                     std::initializer_list<std::uint64_t> idx) {
    std::uint64_t h = splitmix(root);
    // FNV-1a over the stream name, folded into the state.
    std::uint64_t f = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        f ^= c;
        f *= 0x100000001b3ULL;
    }
    h = splitmix(h ^ f);
    for (std::uint64_t i : idx) h = splitmix(h ^ splitmix(i + 0x632be59bd9b4e019ULL));
    return h;
}

std::vector<double> std_normals(Engine& eng, std::size_t n) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> out(n);
    for (auto& v : out) v = dist(eng);
    return out;
}

}  // namespace refnut::rng
