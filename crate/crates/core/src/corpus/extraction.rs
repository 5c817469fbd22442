//! PDF download and PDF→TEI conversion through a Grobid-compatible service.

use std::sync::Arc;

use crate::net::{HttpBody, HttpRequest, HttpTransport, Method};

use super::CorpusError;

pub const FULLTEXT_ENDPOINT: &str = "/api/processFulltextDocument";

pub struct ExtractionClient {
    base_url: String,
    transport: Arc<dyn HttpTransport>,
}

impl ExtractionClient {
    pub fn new(base_url: impl Into<String>, transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            base_url: base_url.into(),
            transport,
        }
    }

    /// Uploads a PDF and returns the TEI document produced by the service.
    pub fn pdf_to_tei(&self, file_name: &str, pdf: Vec<u8>) -> Result<Vec<u8>, CorpusError> {
        let url = format!("{}{FULLTEXT_ENDPOINT}", self.base_url.trim_end_matches('/'));
        let request = HttpRequest {
            method: Method::Post,
            url,
            headers: vec![("accept".into(), "application/xml".into())],
            body: HttpBody::Multipart {
                field: "input".into(),
                file_name: file_name.to_string(),
                content_type: "application/pdf".into(),
                bytes: pdf,
            },
        };
        let response = self
            .transport
            .send(request)
            .map_err(|e| CorpusError::HttpFailure(e.to_string()))?;
        if !response.is_success() {
            return Err(CorpusError::HttpFailure(format!(
                "extraction service returned status {}",
                response.status
            )));
        }
        Ok(response.body)
    }
}

/// Downloads a file over plain GET.
pub fn download(transport: &dyn HttpTransport, url: &str) -> Result<Vec<u8>, CorpusError> {
    let response = transport
        .send(HttpRequest::get(url))
        .map_err(|e| CorpusError::HttpFailure(e.to_string()))?;
    if !response.is_success() {
        return Err(CorpusError::HttpFailure(format!(
            "GET {url} returned status {}",
            response.status
        )));
    }
    Ok(response.body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{HttpResponse, TransportError};
    use std::sync::Mutex;

    struct Capture(Mutex<Option<HttpRequest>>, u16);

    impl HttpTransport for Capture {
        fn send(&self, request: HttpRequest) -> Result<HttpResponse, TransportError> {
            *self.0.lock().unwrap() = Some(request);
            Ok(HttpResponse::new(self.1, "<TEI/>"))
        }
    }

    #[test]
    fn posts_multipart_pdf() {
        let t = Arc::new(Capture(Mutex::new(None), 200));
        let client = ExtractionClient::new("http://localhost:8070/", t.clone());
        let tei = client.pdf_to_tei("W1.pdf", b"%PDF".to_vec()).unwrap();
        assert_eq!(tei, b"<TEI/>");
        let req = t.0.lock().unwrap().take().unwrap();
        assert_eq!(req.url, "http://localhost:8070/api/processFulltextDocument");
        assert!(matches!(req.body, HttpBody::Multipart { ref field, .. } if field == "input"));
    }

    #[test]
    fn service_error_status() {
        let t = Arc::new(Capture(Mutex::new(None), 503));
        let client = ExtractionClient::new("http://localhost:8070", t);
        assert!(matches!(
            client.pdf_to_tei("a.pdf", vec![]),
            Err(CorpusError::HttpFailure(_))
        ));
    }
}
