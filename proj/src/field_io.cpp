#include "gravglue/field_io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace gravglue {

namespace {

// This code assumes a little-endian host (x86/arm64), so scalar writes are
// already LE on disk.
template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void field_io_write(const TensorField& field, const std::string& path) {
    require(!path.empty(), "io-error", "empty output path");
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        require(os.good(), "io-error", "cannot open " + tmp);
        os.write("GRF1", 4);
        put<std::uint32_t>(os, 1u);
        put<std::uint32_t>(os, static_cast<std::uint32_t>(field.rank()));
        for (int a = 0; a < 3; ++a) put<std::uint32_t>(os, static_cast<std::uint32_t>(field.grid().n));
        for (int a = 0; a < 3; ++a) put<double>(os, field.grid().origin[a]);
        put<double>(os, field.grid().h);
        for (int c = 0; c < field.components(); ++c) {
            const auto& d = field.comp(c);
            os.write(reinterpret_cast<const char*>(d.data()),
                     static_cast<std::streamsize>(d.size() * sizeof(double)));
        }
        require(os.good(), "io-error", "write failed for " + tmp);
    }
    require(std::rename(tmp.c_str(), path.c_str()) == 0, "io-error", "rename failed for " + path);
}

TensorField field_io_read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "io-error", "cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, "GRF1", 4) == 0, "bad-format",
            "missing GRF1 magic in " + path);
    std::uint32_t version = get<std::uint32_t>(is);
    require(version == 1, "bad-format", "unsupported GRF1 version");
    std::uint32_t rank_code = get<std::uint32_t>(is);
    require(rank_code <= 2, "bad-format", "invalid rank code");
    std::uint32_t nx = get<std::uint32_t>(is);
    std::uint32_t ny = get<std::uint32_t>(is);
    std::uint32_t nz = get<std::uint32_t>(is);
    require(nx == ny && ny == nz && nx >= 8, "bad-shape", "grids must be cubic with n >= 8");
    Vec3 origin;
    for (int a = 0; a < 3; ++a) origin[a] = get<double>(is);
    double h = get<double>(is);
    require(is.good(), "bad-format", "truncated header in " + path);
    require(h > 0.0, "bad-format", "nonpositive spacing");

    Grid grid(static_cast<int>(nx), h, origin);
    TensorField f(grid, static_cast<Rank>(rank_code));
    for (int c = 0; c < f.components(); ++c) {
        auto& d = f.comp(c);
        is.read(reinterpret_cast<char*>(d.data()),
                static_cast<std::streamsize>(d.size() * sizeof(double)));
        require(is.gcount() == static_cast<std::streamsize>(d.size() * sizeof(double)),
                "bad-shape", "truncated sample data in " + path);
    }
    return f;
}

}  // namespace gravglue
