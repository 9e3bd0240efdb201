#pragma once

namespace itgan {

void blas_set_threads(int n);

}  // namespace itgan
