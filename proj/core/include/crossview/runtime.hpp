#pragma once

namespace crossview {

/// Process-wide numeric setup. Honors CROSSVIEW_DETERMINISTIC=1 by pinning the
/// BLAS backend to one thread so reductions have a fixed order. Idempotent.
void init_runtime();

/// True when CROSSVIEW_DETERMINISTIC=1 was seen at init time.
bool deterministic_mode();

}  // namespace crossview
