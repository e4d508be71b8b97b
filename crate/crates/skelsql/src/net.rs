//! Process-wide count of outgoing HTTP requests. Offline code paths are
//! checked against it in tests.

use std::sync::atomic::{AtomicUsize, Ordering};

static REQUESTS: AtomicUsize = AtomicUsize::new(0);

pub(crate) fn record_request() {
    REQUESTS.fetch_add(1, Ordering::SeqCst);
}

pub fn requests_sent() -> usize {
    REQUESTS.load(Ordering::SeqCst)
}
