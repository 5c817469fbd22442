//! HTTP transport, clocks, retry backoff and request-rate limiting shared by
//! the scholarly API client and the completion gateway.

pub mod backoff;
pub mod clock;
pub mod rate_limit;
pub mod transport;

pub use backoff::Backoff;
pub use clock::{Clock, SimClock, SystemClock};
pub use rate_limit::RateLimiter;
pub use transport::{
    FailingTransport, HttpBody, HttpRequest, HttpResponse, HttpTransport, Method, ReqwestTransport,
    TransportError,
};
