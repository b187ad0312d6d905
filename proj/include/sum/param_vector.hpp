#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sum/linalg.hpp"

namespace sum {

/// Ordered layout of named parameter blocks inside a flat vector.
/// Vectors are blocks with cols == 1; matrices are serialized row-major.
/// The order is declared once per model and reused everywhere a flat
/// parameter vector is interpreted (including the task-parameter matrix
/// columns of the outer training step).
class ParamSchema {
public:
    struct Block {
        std::string name;
        std::size_t rows = 0;
        std::size_t cols = 1;
        std::size_t offset = 0;  // filled in by add()

        std::size_t size() const { return rows * cols; }
    };

    ParamSchema() = default;

    ParamSchema& add(std::string name, std::size_t rows, std::size_t cols = 1);

    std::size_t size() const { return total_; }
    std::size_t block_count() const { return blocks_.size(); }
    const Block& block(std::size_t i) const { return blocks_[i]; }
    const std::vector<Block>& blocks() const { return blocks_; }

    /// Index of the named block; throws ParamError if absent.
    std::size_t index_of(std::string_view name) const;

    /// Name of the block containing flat coordinate `flat_index`.
    const std::string& block_of(std::size_t flat_index) const;

    bool operator==(const ParamSchema& other) const;

private:
    std::vector<Block> blocks_;
    std::size_t total_ = 0;
};

/// Flat parameter vector together with the schema describing its layout.
struct ParamVector {
    std::shared_ptr<const ParamSchema> schema;
    Vector values;

    std::size_t size() const { return static_cast<std::size_t>(values.size()); }

    /// Read-only view of block `i` as a rows x cols matrix.
    Eigen::Map<const Matrix> block(std::size_t i) const;
    Eigen::Map<Matrix> block(std::size_t i);
};

/// Concatenates blocks (in schema order, row-major per block) into a flat
/// vector. Block shapes must match the schema exactly.
Vector vectorize(const ParamSchema& schema, const std::vector<Matrix>& blocks);

/// Splits a flat vector back into its blocks. Exact inverse of vectorize.
std::vector<Matrix> devectorize(const ParamSchema& schema, const Vector& flat);

}  // namespace sum
