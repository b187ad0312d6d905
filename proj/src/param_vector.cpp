#include "sum/param_vector.hpp"

#include "sum/errors.hpp"

namespace sum {

namespace {
constexpr const char* kComponent = "tensor-core";
}

ParamSchema& ParamSchema::add(std::string name, std::size_t rows, std::size_t cols) {
    Block b;
    b.name = std::move(name);
    b.rows = rows;
    b.cols = cols;
    b.offset = total_;
    total_ += b.size();
    blocks_.push_back(std::move(b));
    return *this;
}

std::size_t ParamSchema::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (blocks_[i].name == name) return i;
    }
    throw ParamError(kComponent, "unknown parameter block '" + std::string(name) + "'");
}

const std::string& ParamSchema::block_of(std::size_t flat_index) const {
    for (const Block& b : blocks_) {
        if (flat_index >= b.offset && flat_index < b.offset + b.size()) return b.name;
    }
    throw ParamError(kComponent, "flat index " + std::to_string(flat_index) +
                                     " outside schema of size " + std::to_string(total_));
}

bool ParamSchema::operator==(const ParamSchema& other) const {
    if (blocks_.size() != other.blocks_.size()) return false;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Block& a = blocks_[i];
        const Block& b = other.blocks_[i];
        if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
    }
    return true;
}

Eigen::Map<const Matrix> ParamVector::block(std::size_t i) const {
    const auto& b = schema->block(i);
    return Eigen::Map<const Matrix>(values.data() + b.offset,
                                    static_cast<Eigen::Index>(b.rows),
                                    static_cast<Eigen::Index>(b.cols));
}

Eigen::Map<Matrix> ParamVector::block(std::size_t i) {
    const auto& b = schema->block(i);
    return Eigen::Map<Matrix>(values.data() + b.offset,
                              static_cast<Eigen::Index>(b.rows),
                              static_cast<Eigen::Index>(b.cols));
}

Vector vectorize(const ParamSchema& schema, const std::vector<Matrix>& blocks) {
    if (blocks.size() != schema.block_count()) {
        throw ShapeError(kComponent, "block count " + std::to_string(blocks.size()) +
                                         " does not match schema (" +
                                         std::to_string(schema.block_count()) + ")");
    }
    Vector flat(static_cast<Eigen::Index>(schema.size()));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& spec = schema.block(i);
        const Matrix& m = blocks[i];
        if (static_cast<std::size_t>(m.rows()) != spec.rows ||
            static_cast<std::size_t>(m.cols()) != spec.cols) {
            throw ShapeError(kComponent, "block '" + spec.name + "' has shape " +
                                             std::to_string(m.rows()) + "x" +
                                             std::to_string(m.cols()) + ", schema says " +
                                             std::to_string(spec.rows) + "x" +
                                             std::to_string(spec.cols));
        }
        // Row-major source, so the raw buffer is already in serialization order.
        flat.segment(static_cast<Eigen::Index>(spec.offset),
                     static_cast<Eigen::Index>(spec.size())) =
            Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(spec.size()));
    }
    return flat;
}

std::vector<Matrix> devectorize(const ParamSchema& schema, const Vector& flat) {
    if (static_cast<std::size_t>(flat.size()) != schema.size()) {
        throw ShapeError(kComponent, "flat vector length " + std::to_string(flat.size()) +
                                         " does not match schema size " +
                                         std::to_string(schema.size()));
    }
    std::vector<Matrix> blocks;
    blocks.reserve(schema.block_count());
    for (std::size_t i = 0; i < schema.block_count(); ++i) {
        const auto& spec = schema.block(i);
        blocks.emplace_back(Eigen::Map<const Matrix>(
            flat.data() + spec.offset, static_cast<Eigen::Index>(spec.rows),
            static_cast<Eigen::Index>(spec.cols)));
    }
    return blocks;
}

}  // namespace sum
