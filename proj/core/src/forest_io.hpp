#pragma once

#include "binary_io.hpp"
#include "ctxforest/forest.hpp"

namespace ctxforest::detail {

void write_forest_config(ByteWriter& w, const ForestConfig& cfg);
ForestConfig read_forest_config(ByteReader& r);

}  // namespace ctxforest::detail
