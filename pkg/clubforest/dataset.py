import hashlib
import io
import json
import math
import re
from dataclasses import dataclass, field
from typing import IO, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.io import arff

from clubforest.errors import (ConfigurationError, InputError, ParseError,
                               SchemaError, SplitError)

NUMERIC = 'numeric'
CATEGORICAL = 'categorical'
MISSING = '?'
FORMATS = ('csv', 'arff')

ClassColumn = Optional[Union[str, int]]


@dataclass(frozen=True)
class FeatureDescriptor:
    ''' Description of one input column

    Attributes:
    name (str): column name
    kind (str): 'numeric' or 'categorical'
    categories (Tuple[str, ...]): category set of a categorical feature, in first-appearance order
    '''
    name: str
    kind: str
    categories: Tuple[str, ...] = ()

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


@dataclass(frozen=True)
class Schema:
    ''' Column layout of a classification dataset

    Attributes:
    features (Tuple[FeatureDescriptor, ...]): input columns in file order, class column excluded
    class_labels (Tuple[str, ...]): distinct class values in first-appearance order
    class_index (int): position of the class column in the source file
    class_name (str): name of the class column
    '''
    features: Tuple[FeatureDescriptor, ...]
    class_labels: Tuple[str, ...]
    class_index: int
    class_name: str = 'class'

    def __post_init__(self):
        if len(self.class_labels) < 2:
            raise SchemaError(f'Expected at least 2 distinct class labels, found {len(self.class_labels)}')
        if len(set(self.class_labels)) != len(self.class_labels):
            raise SchemaError('Class labels must be distinct')
        for feat in self.features:
            if feat.is_categorical and len(feat.categories) == 0:
                raise SchemaError(f'Categorical feature "{feat.name}" has an empty category set')

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    @property
    def categorical_mask(self) -> np.ndarray:
        ''' Boolean array, True where the feature is categorical
        '''
        return np.array([f.is_categorical for f in self.features], dtype=bool)

    def encode(self, values: Sequence) -> np.ndarray:
        ''' Encode one record's decoded feature values into a row of codes

        Numeric values become floats, categorical values their index in the category set.

        Parameters:
        values (Sequence): feature values aligned to `features`

        Returns:
        np.ndarray - encoded row
        '''
        if len(values) != self.n_features:
            raise InputError(f'Record has {len(values)} values, schema expects {self.n_features}')
        row = np.empty(self.n_features, dtype=float)
        for i, (feat, value) in enumerate(zip(self.features, values)):
            if feat.is_categorical:
                try:
                    row[i] = feat.categories.index(str(value))
                except ValueError:
                    raise InputError(f'Value {value!r} is not a category of feature "{feat.name}"') from None
            else:
                row[i] = np.nan if value in ('', MISSING, None) else float(value)
        return row

    def to_dict(self) -> dict:
        return {
            'class_name': self.class_name,
            'class_index': self.class_index,
            'class_labels': list(self.class_labels),
            'features': [{'name': f.name, 'kind': f.kind, 'categories': list(f.categories)} for f in self.features],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Schema':
        try:
            features = tuple(FeatureDescriptor(f['name'], f['kind'], tuple(f['categories'])) for f in data['features'])
            return cls(features=features,
                       class_labels=tuple(data['class_labels']),
                       class_index=int(data['class_index']),
                       class_name=data['class_name'])
        except (KeyError, TypeError) as excpt:
            raise SchemaError(f'Malformed schema description: {excpt}') from excpt


class Record(NamedTuple):
    ''' One decoded record: feature values aligned to the schema and the class label
    '''
    values: tuple
    label: str


@dataclass(frozen=True, eq=False)
class Dataset:
    ''' Immutable encoded classification dataset

    Attributes:
    schema (Schema): column layout
    X (np.ndarray): float matrix [n records x n features]; categorical values are category codes,
                    missing numeric values are NaN
    y (np.ndarray): int vector of class codes (index into `schema.class_labels`)
    '''
    schema: Schema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        y = np.array(self.y, dtype=np.int64, copy=True)
        if X.ndim != 2 or X.shape[1] != self.schema.n_features:
            raise InputError(f'Feature matrix shape {X.shape} does not match {self.schema.n_features} features')
        if y.shape != (X.shape[0],):
            raise InputError('Class vector length does not match the number of records')
        if y.size and (y.min() < 0 or y.max() >= self.schema.n_classes):
            raise InputError('Class codes outside of the schema class labels')
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'y', y)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.schema == other.schema
                and np.array_equal(self.X, other.X, equal_nan=True)
                and np.array_equal(self.y, other.y))

    __hash__ = None # type: ignore

    def subset(self, indices: Sequence[int]) -> 'Dataset':
        ''' Return a new dataset holding the records at `indices` (in that order, repeats allowed)
        '''
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.schema, self.X[idx], self.y[idx])

    def record(self, index: int) -> Record:
        ''' Decode the record at `index`
        '''
        values = []
        for feat, value in zip(self.schema.features, self.X[index]):
            if feat.is_categorical:
                values.append(feat.categories[int(value)])
            else:
                values.append(float(value))
        return Record(tuple(values), self.schema.class_labels[int(self.y[index])])

    def fingerprint(self) -> str:
        ''' SHA-256 over the schema and encoded records
        '''
        digest = hashlib.sha256()
        digest.update(json.dumps(self.schema.to_dict(), sort_keys=True).encode('utf-8'))
        digest.update(np.ascontiguousarray(self.X).tobytes())
        digest.update(np.ascontiguousarray(self.y).tobytes())
        return digest.hexdigest()


@dataclass(frozen=True)
class BootstrapSample:
    ''' A with-replacement resample of record indices

    Attributes:
    in_bag (np.ndarray): n sampled indices, with multiplicity, in draw order
    oob (np.ndarray): sorted indices never drawn
    '''
    in_bag: np.ndarray
    oob: np.ndarray = field(repr=False)


def load_dataset(source: Union[bytes, IO[bytes]], fmt: str = 'csv', class_column: ClassColumn = None) -> Dataset:
    ''' Load a classification dataset from a byte stream

    Parameters:
    source (bytes|IO[bytes]): raw file contents, or a binary stream
    fmt (str): 'csv' (header row required) or 'arff'
    class_column (str|int|None): name or position of the class column; the last column if None

    Returns:
    Dataset - the encoded dataset with its inferred schema
    '''
    if fmt not in FORMATS:
        raise ConfigurationError(f'Unknown dataset format "{fmt}", expected one of {FORMATS}')
    raw = source if isinstance(source, (bytes, bytearray)) else source.read()
    try:
        text = bytes(raw).decode('utf-8-sig')
    except UnicodeDecodeError as excpt:
        raise InputError(f'Dataset is not valid UTF-8: {excpt}') from excpt
    if text.strip() == '':
        raise InputError('Dataset is empty')

    if fmt == 'csv':
        names, columns = _read_csv_columns(text)
        declared = {}
    else:
        names, columns, declared = _read_arff_columns(text)

    return _build_dataset(names, columns, declared, class_column)


def load_dataset_file(path: str, class_column: ClassColumn = None, fmt: Optional[str] = None) -> Dataset:
    ''' Load a dataset from a file, picking the format from the file extension when `fmt` is None
    '''
    from clubforest.io import read_bytes
    if fmt is None:
        fmt = 'arff' if path.lower().endswith('.arff') else 'csv'
    return load_dataset(read_bytes(path), fmt=fmt, class_column=class_column)


def _read_csv_columns(text: str) -> Tuple[List[str], List[List[str]]]:
    ''' Parse csv text into column names and string columns, validating row arity
    '''
    # no row can hold more fields than it has separators + 1, so nothing overflows the frame
    width = max(line.count(',') for line in text.splitlines()) + 1
    try:
        frame = pd.read_csv(io.StringIO(text), header=None, names=list(range(width)), index_col=False,
                            dtype=str, keep_default_na=False, skip_blank_lines=False,
                            skipinitialspace=True, engine='python')
    except pd.errors.EmptyDataError as excpt:
        raise InputError('Dataset is empty') from excpt
    except pd.errors.ParserError as excpt:
        match = re.search(r'line (\d+)', str(excpt))
        raise ParseError(f'malformed csv ({excpt})', line=int(match.group(1)) if match else None) from excpt

    names: List[str] = []
    columns: List[List[str]] = []
    for pos, row in enumerate(frame.itertuples(index=False, name=None)):
        # short rows are padded with NaN, so the present values are the row's fields
        fields = [v for v in row if not (v is None or (isinstance(v, float) and math.isnan(v)))]
        if not fields or (len(fields) == 1 and not fields[0].strip()):
            # blank line
            continue
        if not names:
            names = [str(v).strip() for v in fields]
            if len(set(names)) != len(names):
                raise SchemaError(f'Duplicate column names in header: {names}')
            columns = [[] for _ in names]
            continue
        if len(fields) != len(names):
            raise ParseError(f'expected {len(names)} fields, found {len(fields)}', line=pos + 1)
        for col, value in zip(columns, fields):
            col.append(value.strip())
    return names, columns


def _read_arff_columns(text: str) -> Tuple[List[str], List[List[str]], dict]:
    ''' Parse arff text into column names, string columns, and declared nominal category sets
    '''
    try:
        data, meta = arff.loadarff(io.StringIO(text))
    except (arff.ParseArffError, ValueError, NotImplementedError) as excpt:
        raise ParseError(f'invalid arff ({excpt})') from excpt

    names = list(meta.names())
    columns: List[List[str]] = []
    declared = {}
    for name, kind in zip(names, meta.types()):
        values = data[name]
        if kind == 'nominal':
            declared[name] = tuple(meta[name][1])
            columns.append([v.decode('utf-8') if isinstance(v, bytes) else str(v) for v in values])
        elif kind == 'numeric':
            columns.append([MISSING if math.isnan(v) else repr(float(v)) for v in values])
        else:
            raise SchemaError(f'Unsupported arff attribute type "{kind}" for "{name}"')
    return names, columns, declared


def _resolve_class_column(names: List[str], class_column: ClassColumn) -> int:
    if class_column is None:
        return len(names) - 1
    if isinstance(class_column, int) or (isinstance(class_column, str) and re.fullmatch(r'-?\d+', class_column)
                                        and class_column not in names):
        pos = int(class_column)
        if not -len(names) <= pos < len(names):
            raise SchemaError(f'Class column position {pos} out of range for {len(names)} columns')
        return pos % len(names)
    if class_column not in names:
        raise SchemaError(f'Class column "{class_column}" not found; columns are {names}')
    return names.index(class_column)


def _first_appearance(values: Sequence[str]) -> Tuple[str, ...]:
    return tuple(dict.fromkeys(values))


def _is_missing(value: str) -> bool:
    return value == '' or value == MISSING


def _build_dataset(names: List[str], columns: List[List[str]], declared: dict, class_column: ClassColumn) -> Dataset:
    if len(names) < 2:
        raise SchemaError('Dataset needs at least one feature column and a class column')
    n_records = len(columns[0]) if columns else 0
    if n_records < 2:
        raise InputError(f'Dataset needs at least 2 records, found {n_records}')

    class_index = _resolve_class_column(names, class_column)
    labels = [MISSING if v == '' else v for v in columns[class_index]]
    class_labels = _first_appearance(labels)
    if len(class_labels) < 2:
        raise SchemaError(f'Class column "{names[class_index]}" has {len(class_labels)} distinct value(s), need at least 2')

    features = []
    encoded = []
    for pos, (name, values) in enumerate(zip(names, columns)):
        if pos == class_index:
            continue
        missing = np.array([_is_missing(v) for v in values], dtype=bool)
        numeric = pd.to_numeric(pd.Series(values, dtype=object)[~missing], errors='coerce')
        if name not in declared and not numeric.isna().any():
            features.append(FeatureDescriptor(name, NUMERIC))
            column = np.full(n_records, np.nan)
            column[~missing] = numeric.to_numpy(dtype=float)
        else:
            observed = [MISSING if m else v for v, m in zip(values, missing)]
            categories = declared.get(name, ())
            categories = categories + tuple(c for c in _first_appearance(observed) if c not in categories)
            lookup = {c: i for i, c in enumerate(categories)}
            features.append(FeatureDescriptor(name, CATEGORICAL, categories))
            column = np.array([lookup[v] for v in observed], dtype=float)
        encoded.append(column)

    schema = Schema(tuple(features), class_labels, class_index, names[class_index])
    lookup = {c: i for i, c in enumerate(class_labels)}
    y = np.array([lookup[v] for v in labels], dtype=np.int64)
    return Dataset(schema, np.column_stack(encoded), y)


def save_dataset(d: Dataset, stream: IO[str]) -> None:
    ''' Write a dataset as csv, with the class column at its original position

    Parameters:
    d (Dataset): dataset to write
    stream (IO[str]): text stream to write to
    '''
    data = {}
    for pos, feat in enumerate(d.schema.features):
        column = d.X[:, pos]
        if feat.is_categorical:
            data[feat.name] = [feat.categories[int(v)] for v in column]
        else:
            data[feat.name] = [MISSING if math.isnan(v) else repr(float(v)) for v in column]
    frame = pd.DataFrame(data)
    frame.insert(d.schema.class_index, d.schema.class_name, [d.schema.class_labels[int(c)] for c in d.y])
    frame.to_csv(stream, index=False, lineterminator='\n')


def holdout_indices(n: int, train_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    ''' Seeded shuffle of range(n), split into a train head and a test tail

    Parameters:
    n (int): number of records
    train_fraction (float): fraction of records (floored) reserved for training
    seed (int): seed of the shuffle

    Returns:
    Tuple[np.ndarray, np.ndarray] - (train indices, test indices)
    '''
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError(f'train_fraction must lie in (0, 1), got {train_fraction}')
    if n < 3:
        raise SplitError(f'Holdout split needs at least 3 records, found {n}')
    n_train = int(math.floor(round(train_fraction * n, 9)))
    if n_train == 0 or n_train == n:
        raise SplitError(f'train_fraction={train_fraction} leaves an empty side for n={n}')
    # Generator.permutation is a Fisher-Yates shuffle
    order = np.random.default_rng(seed).permutation(n)
    return order[:n_train], order[n_train:]


def holdout_split(d: Dataset, train_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    ''' Split a dataset into train and test parts after a seeded shuffle

    Both parts keep the parent schema, including classes absent from one side.

    Parameters:
    d (Dataset): dataset to split
    train_fraction (float): fraction in (0, 1) reserved for training
    seed (int): seed of the shuffle

    Returns:
    Tuple[Dataset, Dataset] - (train, test)
    '''
    train_idx, test_idx = holdout_indices(d.n, train_fraction, seed)
    return d.subset(train_idx), d.subset(test_idx)


def bootstrap_sample(d: Union[Dataset, int], rng: np.random.Generator) -> BootstrapSample:
    ''' Draw n record indices uniformly with replacement

    Parameters:
    d (Dataset|int): the dataset (or its record count) to resample
    rng (np.random.Generator): random stream owned by the caller

    Returns:
    BootstrapSample - in-bag multiset and the out-of-bag complement
    '''
    n = d if isinstance(d, int) else d.n
    if n < 1:
        raise InputError('Cannot bootstrap an empty dataset')
    in_bag = rng.integers(0, n, size=n)
    oob = np.setdiff1d(np.arange(n), in_bag)
    in_bag.flags.writeable = False
    oob.flags.writeable = False
    return BootstrapSample(in_bag, oob)


def impute_numeric(train: Dataset, *others: Dataset) -> Tuple[Dataset, ...]:
    ''' Replace missing numeric values with the medians of the training split

    A column with no observed value in `train` is imputed with 0.0.

    Parameters:
    train (Dataset): split providing the medians
    others (Dataset): further splits sharing the schema

    Returns:
    Tuple[Dataset, ...] - (train, *others) imputed
    '''
    numeric = ~train.schema.categorical_mask
    medians = np.zeros(train.schema.n_features)
    for pos in np.flatnonzero(numeric):
        observed = train.X[:, pos][~np.isnan(train.X[:, pos])]
        medians[pos] = float(np.median(observed)) if observed.size else 0.0

    out = []
    for d in (train, *others):
        if d.schema != train.schema:
            raise InputError('All datasets passed to impute_numeric must share a schema')
        X = np.array(d.X)
        holes = np.isnan(X) & numeric[np.newaxis, :]
        if holes.any():
            X[holes] = np.broadcast_to(medians, X.shape)[holes]
            d = Dataset(d.schema, X, d.y)
        out.append(d)
    return tuple(out)
