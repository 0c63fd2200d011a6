import json
import os
import shutil
from typing import Any, Optional

import click
import pandas as pd
import ruamel.yaml as yaml
import tqdm

from clubforest.errors import ContainerError, InputError


def click_monkey_patch_option_show_defaults() -> None:
    ''' Monkey patch click.core.Option to turn on showing default values.
    '''
    orig_init = click.core.Option.__init__
    def new_init(self, *args, **kwargs):
        ''' This version of click.core.Option.__init__ will set show default values to True
        '''
        orig_init(self, *args, **kwargs)
        self.show_default = True
    # end new_init()
    click.core.Option.__init__ = new_init # type: ignore


def read_bytes(path: str) -> bytes:
    ''' Read the raw contents of a file

    Parameters:
    path (str): path to the file to read

    Returns:
    bytes - file contents
    '''
    try:
        with open(path, 'rb') as in_file:
            return in_file.read()
    except OSError as excpt:
        raise InputError(f'Unable to read "{path}": {excpt.strerror}') from excpt


def read_yaml(yaml_file: str) -> dict:
    ''' Read a yaml file into dict object

    Parameters:
    yaml_file (str): path to yaml file

    Returns:
    return_dict (dict): dict of yaml contents
    '''
    with open(yaml_file, 'r') as yfile:
        yml = yaml.YAML(typ='safe')
        data = yml.load(yfile)
    return {} if data is None else data


def write_yaml(yaml_file: str, data: dict) -> None:
    ''' Write a dict object into a yaml file

    Parameters:
    yaml_file (str): path to yaml file
    data (dict): dict of data to write to `yaml_file`
    '''
    backup_if_exists(yaml_file)
    with open(yaml_file, 'w', encoding='utf-8', newline='\n') as yfile:
        yml = yaml.YAML(typ='safe')
        yml.default_flow_style = False
        yml.dump(data, yfile)


def read_container(path: str, format_tag: str) -> dict:
    ''' Read a json container and check its format tag

    Parameters:
    path (str): path to the container file
    format_tag (str): expected value of the top level `format` key

    Returns:
    dict - container contents
    '''
    try:
        with open(path, 'r', encoding='utf-8') as in_file:
            data = json.load(in_file)
    except OSError as excpt:
        raise InputError(f'Unable to read "{path}": {excpt.strerror}') from excpt
    except json.JSONDecodeError as excpt:
        raise ContainerError(f'"{path}" is not a valid container: {excpt}') from excpt

    if not isinstance(data, dict) or data.get('format') != format_tag:
        found = data.get('format') if isinstance(data, dict) else None
        raise ContainerError(f'"{path}" has format {found!r}, expected {format_tag!r}')
    return data


def dump_container(data: dict) -> str:
    ''' Serialize a container to its canonical text form

    Key order is taken from `data`, so equal containers always produce identical text.
    '''
    return json.dumps(data, separators=(',', ':'), ensure_ascii=False, allow_nan=False)


def write_container(path: str, data: dict) -> None:
    ''' Write a json container to a file

    Parameters:
    path (str): destination path
    data (dict): container contents
    '''
    backup_if_exists(path)
    with open(path, 'w', encoding='utf-8', newline='\n') as out_file:
        out_file.write(dump_container(data))
        out_file.write('\n')


def write_table(path: str, table: pd.DataFrame, float_format: str = '%.6f') -> None:
    ''' Write a report table as CSV with a fixed float format

    Parameters:
    path (str): destination path
    table (pd.DataFrame): table to write; the index is not written
    float_format (str): printf-style format applied to every float column
    '''
    backup_if_exists(path)
    table.to_csv(path, index=False, float_format=float_format, na_rep='n/a', lineterminator='\n')


def backup_if_exists(path: str) -> Optional[str]:
    ''' Back up `path` before it gets overwritten

    Parameters:
    path (str): file about to be written

    Returns:
    str|None - path of the backup, or None when nothing existed
    '''
    if not os.path.exists(path):
        return None
    tqdm.tqdm.write(f'WARNING: file already exists! {path}')
    backup = backup_existing_file(path)
    tqdm.tqdm.write(f' -> Backing this file up to {backup}')
    return backup


def backup_existing_file(origional_path: str) -> str:
    ''' Backup a file, ensuring no filename clashes

    Given a path, while that path exists, we append an incrementing suffix
    until the path no longer exists on the file system. The file is then
    copied to the new path. The new path is returned.

    Parameters:
    origional_path (str): name of the file that should be backed up

    Returns
    str - new file path
    '''

    counter = 0
    new_path = origional_path
    base, ext = os.path.splitext(origional_path)
    while os.path.exists(new_path):
        counter += 1
        new_path = f'{base}.backup-{counter}{ext}'

    shutil.copy2(origional_path, new_path)
    return new_path


def as_plain(value: Any) -> Any:
    ''' Convert numpy scalars and containers into plain python values for serialization
    '''
    if isinstance(value, dict):
        return {str(k): as_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [as_plain(v) for v in value]
    if hasattr(value, 'tolist'):
        return value.tolist()
    return value
