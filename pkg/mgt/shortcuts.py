import json
from io import StringIO, TextIOWrapper
from pathlib import Path

from mgt.exceptions import ConfigException
from mgt.graph import Graph, load_graph
from mgt.spectral import DEFAULT_SCALES, heat_kernel_signature, lappe, rwpe, wavelet_tensor
from mgt.training import export_clusters, export_wavelet_encoding

PE_KINDS = ('wave', 'rw', 'lap')
# document "kind" of every CLI token
DOCUMENT_KINDS = {'wave': 'wavepe', 'rw': 'rwpe', 'lap': 'lappe'}


def read_graph(source: Graph | Path | str | bytes | TextIOWrapper) -> Graph:
    """A graph from a ``Graph``, a path, a JSON document or an open file."""
    if isinstance(source, Graph):
        return source

    if isinstance(source, Path):
        return load_graph(source.read_bytes())

    return load_graph(source)


def _write(document: dict, write_to) -> str | None:
    if write_to:
        json.dump(document, write_to)
        return None

    buffer = StringIO()
    json.dump(document, buffer)
    return buffer.getvalue()


def positional_document(g: Graph, kind: str, scales=DEFAULT_SCALES, steps: int = 16, dim: int = 8,
                        full: bool = False, checkpoint=None) -> dict:
    """Positional features as ``{"kind", "n", "k", "rows"}``.

    ``wave`` emits the heat-kernel signature (diagonals of every wavelet) or,
    given a ``checkpoint``, the rows of its trained wavelet encoder at the
    checkpoint's scales. ``full`` adds the whole n×n×k wavelet tensor.
    """
    if kind not in PE_KINDS:
        raise ConfigException(f'unknown positional encoding "{kind}", expected one of {PE_KINDS}', 'kind')

    if checkpoint is not None and kind != 'wave':
        raise ConfigException(f'a checkpoint only applies to "wave", not "{kind}"', 'checkpoint')

    if kind == 'wave':
        if checkpoint is None:
            tensor = wavelet_tensor(g, scales)
            rows = heat_kernel_signature(tensor)
        else:
            encoded = export_wavelet_encoding(checkpoint, g)
            tensor = wavelet_tensor(g, encoded['scales'])
            rows = encoded['rows']

        document = {
            'kind': DOCUMENT_KINDS[kind],
            'n': g.n,
            'k': tensor.k,
            'scales': tensor.scales.tolist(),
            'rows': rows.tolist(),
        }
        if full:
            document['tensor'] = tensor.channels_last().tolist()

        return document

    rows = rwpe(g, steps) if kind == 'rw' else lappe(g, dim)
    return {'kind': DOCUMENT_KINDS[kind], 'n': g.n, 'k': rows.shape[1], 'rows': rows.tolist()}


def encode(
        source: Graph | Path | str | bytes | TextIOWrapper,
        kind: str,
        write_to=None,
        scales=DEFAULT_SCALES,
        steps: int = 16,
        dim: int = 8,
        full: bool = False,
        checkpoint=None,
) -> str | None:
    return _write(positional_document(read_graph(source), kind, scales, steps, dim, full, checkpoint), write_to)


def clusters(
        checkpoint,
        source: Graph | Path | str | bytes | TextIOWrapper,
        write_to=None,
) -> str | None:
    return _write(export_clusters(checkpoint, read_graph(source)), write_to)
