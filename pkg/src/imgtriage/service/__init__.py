"""Review service: project persistence, round pipeline, and the HTTP API."""
