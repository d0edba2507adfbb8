"""Child-process entry point for the socket transport.

Reads a pickled cloud actor from stdin, prints the listening port on
stdout and serves one edge connection.
"""

import pickle
import socket
import sys

from .runtime import serve


def main() -> None:
    cloud = pickle.loads(sys.stdin.buffer.read())
    srv = socket.create_server(("127.0.0.1", 0))
    print(srv.getsockname()[1], flush=True)
    serve(cloud, srv)


if __name__ == "__main__":
    main()
