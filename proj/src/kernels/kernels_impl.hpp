#pragma once

#include "lowshot/kernels.hpp"

namespace lowshot::kernels::detail {

extern const KernelTable kScalarTable;

#if defined(LOWSHOT_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

}  // namespace lowshot::kernels::detail
