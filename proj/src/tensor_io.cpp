#include "kpshift/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace kpshift {

namespace {

constexpr char kMagic[4] = {'K', 'P', 'S', 'T'};
constexpr std::uint16_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "KPST I/O assumes a little-endian host");

void put_u16(std::vector<unsigned char>& buf, std::uint16_t v) {
    buf.push_back(static_cast<unsigned char>(v & 0xff));
    buf.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

}  // namespace

void tensor_write(const Tensor& t, const std::string& path) {
    t.require_finite("tensor_write");
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u16(buf, kVersion);
    buf.push_back(static_cast<unsigned char>(t.dtype()));
    buf.push_back(static_cast<unsigned char>(t.rank()));
    for (std::size_t d : t.dims()) put_u64(buf, static_cast<std::uint64_t>(d));
    if (t.dtype() == DType::F32) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            const float f = static_cast<float>(t[i]);
            unsigned char b[4];
            std::memcpy(b, &f, 4);
            buf.insert(buf.end(), b, b + 4);
        }
    } else {
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double d = t[i];
            unsigned char b[8];
            std::memcpy(b, &d, 8);
            buf.insert(buf.end(), b, b + 8);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("tensor_write: cannot open '" + path + "'", 0);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("tensor_write: short write to '" + path + "'", buf.size());
}

Tensor tensor_read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("tensor_read: cannot open '" + path + "'", 0);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    auto need = [&](std::size_t n, const char* what) {
        if (pos + n > buf.size()) {
            throw FormatError(std::string("tensor_read: truncated file, expected ") + what, pos);
        }
    };

    need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw FormatError("tensor_read: bad magic", 0);
    }
    pos = 4;

    need(2, "version");
    const std::uint16_t version =
        static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
    if (version != kVersion) {
        throw FormatError("tensor_read: unsupported version " + std::to_string(version), pos);
    }
    pos += 2;

    need(1, "dtype");
    const unsigned char dt = buf[pos];
    if (dt > 1) throw FormatError("tensor_read: unknown dtype " + std::to_string(dt), pos);
    const DType dtype = static_cast<DType>(dt);
    pos += 1;

    need(1, "ndim");
    const std::size_t ndim = buf[pos];
    pos += 1;

    std::vector<std::size_t> dims(ndim);
    for (std::size_t a = 0; a < ndim; ++a) {
        need(8, "extent");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        if (v == 0) throw FormatError("tensor_read: zero extent", pos);
        dims[a] = static_cast<std::size_t>(v);
        pos += 8;
    }

    const std::size_t count = shape_product(dims);
    const std::size_t elem = dtype == DType::F32 ? 4 : 8;
    need(count * elem, "payload");
    std::vector<double> values(count);
    if (dtype == DType::F32) {
        for (std::size_t i = 0; i < count; ++i) {
            float f;
            std::memcpy(&f, buf.data() + pos + i * 4, 4);
            values[i] = static_cast<double>(f);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            std::memcpy(&values[i], buf.data() + pos + i * 8, 8);
        }
    }
    pos += count * elem;
    if (pos != buf.size()) {
        throw FormatError("tensor_read: trailing bytes after payload", pos);
    }
    return Tensor(std::move(dims), std::move(values), dtype);
}

}  // namespace kpshift
