#include "air/tensor/serialize.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "air/util/atomic_file.hpp"

namespace air {

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> bytes{};
    for (std::size_t i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out.write(bytes.data(), 8);
}

std::uint64_t get_u64(const std::array<unsigned char, 8>& bytes) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

}  // namespace

void write_tensor_record(std::ostream& out, const TensorRecord& record) {
    nlohmann::json header = {
        {"name", record.name},
        {"dtype", "f64"},
        {"shape", record.tensor.shape()},
        {"meta", record.meta},
    };
    const std::string text = header.dump();
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (double v : record.tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::optional<TensorRecord> read_tensor_record(std::istream& in) {
    std::array<unsigned char, 8> len_bytes{};
    in.read(reinterpret_cast<char*>(len_bytes.data()), 8);
    if (in.gcount() == 0 && in.eof()) return std::nullopt;
    if (in.gcount() != 8) throw std::runtime_error("tensor record: truncated header length");
    const std::uint64_t len = get_u64(len_bytes);
    if (len > (1u << 24)) throw std::runtime_error("tensor record: implausible header length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(in.gcount()) != len) {
        throw std::runtime_error("tensor record: truncated header");
    }
    const auto header = nlohmann::json::parse(text);
    if (header.at("dtype") != "f64") {
        throw std::runtime_error("tensor record: unsupported dtype " + header.at("dtype").dump());
    }
    TensorRecord record;
    record.name = header.value("name", "");
    if (header.contains("meta")) record.meta = header.at("meta");
    const Shape shape = header.at("shape").get<Shape>();
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) {
        std::array<unsigned char, 8> bytes{};
        in.read(reinterpret_cast<char*>(bytes.data()), 8);
        if (in.gcount() != 8) throw std::runtime_error("tensor record: truncated payload");
        v = std::bit_cast<double>(get_u64(bytes));
    }
    record.tensor = Tensor(shape, std::move(data));
    return record;
}

void save_tensor_file(const std::filesystem::path& path, const std::vector<TensorRecord>& records) {
    write_file_atomic(
        path,
        [&](std::ostream& out) {
            for (const auto& r : records) write_tensor_record(out, r);
        },
        /*binary=*/true);
}

std::vector<TensorRecord> load_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open tensor file " + path.string());
    std::vector<TensorRecord> records;
    while (auto r = read_tensor_record(in)) records.push_back(std::move(*r));
    return records;
}

}  // namespace air
