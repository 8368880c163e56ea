from urllib.parse import urlparse, parse_qs, urlencode


def split_url(url):
    parts = urlparse(url)
    return {
        "scheme": parts.scheme,
        "host": parts.hostname,
        "port": parts.port or (443 if parts.scheme == "https" else 80),
        "path": parts.path or "/",
        "query": {k: v[0] for k, v in parse_qs(parts.query).items()},
    }


def build_url(host, path="/", scheme="https", **params):
    url = "%s://%s%s" % (scheme, host, path)
    if params:
        url += "?" + urlencode(sorted(params.items()))
    return url


def same_origin(first, second):
    a, b = split_url(first), split_url(second)
    return (a["scheme"], a["host"], a["port"]) == (b["scheme"], b["host"], b["port"])


link = "https://example.com/search?q=adapters&page=2"
print(split_url(link))
print(build_url("example.com", "/api", page=3, q="ast"))
print(same_origin(link, "https://example.com:443/other"))
