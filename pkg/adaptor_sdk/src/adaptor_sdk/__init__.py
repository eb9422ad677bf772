"""Server-side SDK for the external-simulator wire protocol.

Wrap any simulator in three callbacks (reset, next, eval) and expose it to
the analysis engine as a child process or a TCP endpoint::

    from adaptor_sdk import AdaptorServer

    server = AdaptorServer()

    @server.on_reset
    def reset(seed, params):
        model.setup(seed, **params)

    @server.on_next
    def step():
        model.go()

    @server.on_eval
    def observe(obs):
        return model.report(obs)

    server.serve()  # stdio; or transport="tcp", port=9000
"""

from .server import AdaptorServer, ProtocolError, serve

__all__ = ["AdaptorServer", "ProtocolError", "serve"]
