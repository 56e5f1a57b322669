#pragma once

// Little-endian binary encoding shared by the checkpoint and index files.

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "qtitle/tensor.hpp"

namespace qtitle {

class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f64 = 1, f32 = 2 };

class BinaryWriter {
  public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    void bytes(const void* data, std::size_t n);
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void f32(float v);
    /// u32 byte length followed by UTF-8 bytes.
    void string(const std::string& s);
    /// Tensor block: name, dtype tag, rank (u32), dims (u64 each), raw values.
    void tensor(const std::string& name, const Tensor& t, DType dtype = DType::f64);

  private:
    std::ostream& out_;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

class BinaryReader {
  public:
    BinaryReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    void bytes(void* data, std::size_t n);
    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    float f32();
    std::string string(std::size_t max_len = 1u << 20);
    NamedTensor tensor();

    /// Reads exactly 4 bytes and compares with `magic`.
    void expect_magic(const char (&magic)[5]);
    [[noreturn]] void fail(const std::string& what) const;

  private:
    std::istream& in_;
    std::string source_;
};

}  // namespace qtitle
