#include "qtitle/binary_io.hpp"

#include <bit>
#include <cstring>

#include <fmt/format.h>

namespace qtitle {

namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

}  // namespace

void BinaryWriter::bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw std::runtime_error("write failed");
}

void BinaryWriter::u32(std::uint32_t v) { put_le(out_, v); }
void BinaryWriter::u64(std::uint64_t v) { put_le(out_, v); }
void BinaryWriter::f64(double v) { put_le(out_, std::bit_cast<std::uint64_t>(v)); }
void BinaryWriter::f32(float v) { put_le(out_, std::bit_cast<std::uint32_t>(v)); }

void BinaryWriter::string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
}

void BinaryWriter::tensor(const std::string& name, const Tensor& t, DType dtype) {
    string(name);
    u8(static_cast<std::uint8_t>(dtype));
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) u64(d);
    for (double v : t.values()) {
        if (dtype == DType::f64)
            f64(v);
        else
            f32(static_cast<float>(v));
    }
    if (!out_) throw std::runtime_error("write failed");
}

void BinaryReader::fail(const std::string& what) const {
    throw FormatError(fmt::format("{}: {}", source_, what));
}

void BinaryReader::bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("unexpected end of file");
}

namespace {

template <typename U>
U get_le(BinaryReader& r) {
    unsigned char buf[sizeof(U)];
    r.bytes(buf, sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

std::uint8_t BinaryReader::u8() { return get_le<std::uint8_t>(*this); }
std::uint32_t BinaryReader::u32() { return get_le<std::uint32_t>(*this); }
std::uint64_t BinaryReader::u64() { return get_le<std::uint64_t>(*this); }
double BinaryReader::f64() { return std::bit_cast<double>(get_le<std::uint64_t>(*this)); }
float BinaryReader::f32() { return std::bit_cast<float>(get_le<std::uint32_t>(*this)); }

std::string BinaryReader::string(std::size_t max_len) {
    const auto n = u32();
    if (n > max_len) fail(fmt::format("string length {} exceeds limit {}", n, max_len));
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
}

NamedTensor BinaryReader::tensor() {
    NamedTensor out;
    out.name = string(4096);
    const auto tag = u8();
    if (tag != static_cast<std::uint8_t>(DType::f64) && tag != static_cast<std::uint8_t>(DType::f32))
        fail(fmt::format("tensor '{}' has unknown dtype tag {}", out.name, tag));
    const auto rank = u32();
    if (rank == 0 || rank > 8) fail(fmt::format("tensor '{}' has invalid rank {}", out.name, rank));
    std::vector<std::size_t> shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
        d = u64();
        if (d == 0 || d > (1ull << 32)) fail(fmt::format("tensor '{}' has invalid dimension {}", out.name, d));
        count *= d;
        if (count > (1ull << 34)) fail(fmt::format("tensor '{}' is implausibly large", out.name));
    }
    std::vector<double> values(count);
    for (auto& v : values) v = tag == static_cast<std::uint8_t>(DType::f64) ? f64() : f32();
    out.tensor = Tensor(std::move(shape), std::move(values));
    return out;
}

void BinaryReader::expect_magic(const char (&magic)[5]) {
    char buf[4];
    bytes(buf, 4);
    if (std::memcmp(buf, magic, 4) != 0) fail(fmt::format("bad magic, expected '{}'", magic));
}

}  // namespace qtitle
